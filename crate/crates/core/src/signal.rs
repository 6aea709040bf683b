//! Causal waveforms and their sampled time traces.
//!
//! A [`CausalSignal`] vanishes identically for `t <= 0`. The canonical
//! signal is the smooth bump `exp(-(w/t)^2)`, which is `C^inf` at the
//! origin with every derivative equal to zero there.
//!
//! A [`Trace`] is a uniformly sampled time series extended by zero before
//! its first sample. Lookups between samples use a linear or a four-point
//! cubic Lagrange stencil; lookups past the last sample are an error.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Fractional-index distance under which a lookup snaps to the nearest node.
pub const NODE_SNAP: f64 = 1e-9;

/// Exponent beyond which `exp(-u^2)` is treated as exactly zero.
const UNDERFLOW_EXPONENT: f64 = 700.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interp {
    Linear,
    #[default]
    Cubic,
}

impl Interp {
    /// Formal order of accuracy of the interpolant.
    pub fn order(self) -> u32 {
        match self {
            Interp::Linear => 2,
            Interp::Cubic => 4,
        }
    }
}

impl std::str::FromStr for Interp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Interp::Linear),
            "cubic" => Ok(Interp::Cubic),
            other => invalid(format!("unknown interpolation order '{other}'")),
        }
    }
}

/// Interpolation stencil on a unit-spaced sample sequence.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Stencil {
    pub start: usize,
    pub npts: usize,
    pub weights: [f64; 4],
}

impl Stencil {
    #[inline]
    pub fn apply(&self, samples: &[f64]) -> f64 {
        let s = &samples[self.start..self.start + self.npts];
        s.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }
}

/// Lagrange basis (or its `deriv`-th derivative) for nodes `0..npts` at `u`.
fn lagrange_weights(u: f64, npts: usize, deriv: u32) -> [f64; 4] {
    let mut w = [0.0; 4];
    for (j, wj) in w.iter_mut().enumerate().take(npts) {
        // u - k for the nodes other than j
        let mut others = [0.0; 3];
        let mut denom = 1.0;
        let mut q = 0;
        for k in (0..npts).filter(|&k| k != j) {
            others[q] = u - k as f64;
            denom *= j as f64 - k as f64;
            q += 1;
        }
        let f = &others[..q];
        let product_without = |skip: &[usize]| -> f64 {
            f.iter()
                .enumerate()
                .filter(|(r, _)| !skip.contains(r))
                .map(|(_, v)| v)
                .product()
        };
        let num = match deriv {
            0 => product_without(&[]),
            1 => (0..q).map(|l| product_without(&[l])).sum(),
            _ => (0..q)
                .flat_map(|l| (0..q).filter(move |&m| m != l).map(move |m| (l, m)))
                .map(|(l, m)| product_without(&[l, m]))
                .sum(),
        };
        *wj = num / denom;
    }
    w
}

/// Stencil for evaluating at fractional index `x` in `[0, len - 1]`.
///
/// Nodes within [`NODE_SNAP`] return the stored sample. The cubic stencil is
/// centred (`m-1..=m+2` for `x` in `(m, m+1)`) and shifts inward at either
/// end of the sequence.
pub(crate) fn stencil(x: f64, len: usize, order: Interp) -> Stencil {
    debug_assert!(len >= 1);
    let r = x.round();
    if (x - r).abs() <= NODE_SNAP || len == 1 {
        let k = (r.max(0.0) as usize).min(len - 1);
        return Stencil {
            start: k,
            npts: 1,
            weights: [1.0, 0.0, 0.0, 0.0],
        };
    }
    let m = (x.floor().max(0.0) as usize).min(len - 2);
    match order {
        Interp::Linear => {
            let th = x - m as f64;
            Stencil {
                start: m,
                npts: 2,
                weights: [1.0 - th, th, 0.0, 0.0],
            }
        }
        Interp::Cubic => {
            let npts = len.min(4);
            let start = (m as isize - 1).clamp(0, (len - npts) as isize) as usize;
            Stencil {
                start,
                npts,
                weights: lagrange_weights(x - start as f64, npts, 0),
            }
        }
    }
}

/// Uniformly sampled time series; zero before `t0`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    t0: f64,
    dt: f64,
    samples: Vec<f64>,
}

impl Trace {
    pub fn new(t0: f64, dt: f64, samples: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) || !t0.is_finite() {
            return invalid(format!("trace needs finite t0 and dt > 0 (t0 = {t0}, dt = {dt})"));
        }
        if samples.is_empty() {
            return invalid("trace needs at least one sample");
        }
        if let Some(k) = samples.iter().position(|v| !v.is_finite()) {
            return invalid(format!("trace sample {k} is not finite"));
        }
        Ok(Self { t0, dt, samples })
    }

    pub fn zeros(t0: f64, dt: f64, n: usize) -> Result<Self> {
        Self::new(t0, dt, vec![0.0; n.max(1)])
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    #[cfg(test)]
    pub(crate) fn samples_mut(&mut self) -> &mut [f64] {
        &mut self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn end_time(&self) -> f64 {
        self.time(self.samples.len() - 1)
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Fractional sample index of `t`.
    #[inline]
    pub(crate) fn index_of(&self, t: f64) -> f64 {
        (t - self.t0) / self.dt
    }

    /// Value at `t`: zero before `t0`, error past the last sample.
    pub fn interp(&self, t: f64, order: Interp) -> Result<f64> {
        self.interp_upto(t, order, self.samples.len() - 1)
    }

    /// As [`Trace::interp`], restricted to samples `0..=cap`.
    pub(crate) fn interp_upto(&self, t: f64, order: Interp, cap: usize) -> Result<f64> {
        let x = self.index_of(t);
        if x < -NODE_SNAP {
            return Ok(0.0);
        }
        let cap = cap.min(self.samples.len() - 1);
        if x > cap as f64 + NODE_SNAP {
            return Err(Error::OutOfWindow {
                t,
                end: self.time(cap),
            });
        }
        let x = x.clamp(0.0, cap as f64);
        Ok(stencil(x, cap + 1, order).apply(&self.samples))
    }

    /// Samples this trace's interpolant on a new uniform grid.
    pub fn resample(&self, t0: f64, dt: f64, n: usize, order: Interp) -> Result<Trace> {
        let samples = (0..n)
            .map(|k| self.interp(t0 + k as f64 * dt, order))
            .collect::<Result<Vec<_>>>()?;
        Trace::new(t0, dt, samples)
    }

    /// Writes `time,value` rows under a one-line header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "time,value")?;
        for (k, v) in self.samples.iter().enumerate() {
            writeln!(w, "{:e},{:e}", self.time(k), v)?;
        }
        Ok(())
    }

    /// Reads the two-column format written by [`Trace::write_csv`].
    ///
    /// Times must be uniformly spaced to within `1e-9` of the step.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Trace> {
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if lineno == 0 || line.is_empty() {
                continue;
            }
            let mut cols = line.split(',');
            let parse = |s: Option<&str>| -> Result<f64> {
                s.ok_or_else(|| Error::Parse(format!("line {}: missing column", lineno + 1)))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))
            };
            times.push(parse(cols.next())?);
            values.push(parse(cols.next())?);
        }
        if times.len() < 2 {
            return Err(Error::Parse("trace file needs at least two rows".into()));
        }
        let dt = times[1] - times[0];
        for (k, t) in times.iter().enumerate() {
            if (t - (times[0] + k as f64 * dt)).abs() > 1e-9 * dt.abs().max(1e-300) * (k as f64 + 1.0) {
                return Err(Error::Parse(format!("row {k}: time grid is not uniform")));
            }
        }
        Trace::new(times[0], dt, values)
    }
}

/// Fixed-delay lookup `y(t_n - s dt)` on a marching grid, with the stencil
/// weights precomputed once.
///
/// Delays of at least one step read samples `0..n` only; shorter delays also
/// read sample `n`, the unknown of the current step. A delay that lands on a
/// node reads that node.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Lag {
    steps: f64,
    explicit: bool,
    /// Offset of the steady-state stencil start from `n`, and its weights.
    offset: isize,
    npts: usize,
    weights: [f64; 4],
    /// First step from which the steady stencil applies.
    steady_from: usize,
    order: Interp,
}

impl Lag {
    pub fn new(steps: f64, order: Interp) -> Self {
        debug_assert!(steps >= 0.0);
        let explicit = steps >= 1.0 - NODE_SNAP;
        // evaluate at a step far enough from the start that no clamping occurs
        let n0 = steps.ceil() as usize + 8;
        let cap = if explicit { n0 - 1 } else { n0 };
        let st = stencil((n0 as f64 - steps).clamp(0.0, cap as f64), cap + 1, order);
        Self {
            steps,
            explicit,
            offset: st.start as isize - n0 as isize,
            npts: st.npts,
            weights: st.weights,
            steady_from: n0,
            order,
        }
    }

    /// True when the lookup never touches the current step.
    pub fn is_explicit(&self) -> bool {
        self.explicit
    }

    /// Value at step `n`; `samples` must hold valid data at indices `0..=n`
    /// (`0..n` for explicit lags).
    #[inline]
    pub fn eval(&self, samples: &[f64], n: usize) -> f64 {
        if n >= self.steady_from {
            let start = (n as isize + self.offset) as usize;
            let s = &samples[start..start + self.npts];
            return s.iter().zip(&self.weights).map(|(v, w)| v * w).sum();
        }
        let x = n as f64 - self.steps;
        if x < -NODE_SNAP {
            return 0.0;
        }
        let cap = if self.explicit { n.saturating_sub(1) } else { n };
        let x = x.clamp(0.0, cap as f64);
        stencil(x, cap + 1, self.order).apply(samples)
    }
}

/// Causal excitation signal; identically zero for `t <= 0`.
#[derive(Clone, Debug, PartialEq)]
pub enum CausalSignal {
    /// `amplitude * exp(-(width / t)^2)` for `t > 0`.
    SmoothBump { amplitude: f64, width: f64 },
    /// The smooth bump started at `delay`.
    DelayedSmoothBump {
        amplitude: f64,
        width: f64,
        delay: f64,
    },
    /// Tabulated waveform; cubic interpolation inside the record, held at its
    /// last value afterwards. Causality is assumed, not checked.
    UserSampled(Trace),
}

impl Default for CausalSignal {
    fn default() -> Self {
        CausalSignal::smooth_bump()
    }
}

fn bump(amplitude: f64, width: f64, t: f64, order: u32) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let u2 = (width / t).powi(2);
    if u2 > UNDERFLOW_EXPONENT {
        return 0.0;
    }
    let e = amplitude * (-u2).exp();
    let w2 = width * width;
    match order {
        0 => e,
        1 => e * 2.0 * w2 / t.powi(3),
        _ => e * (4.0 * w2 * w2 / t.powi(6) - 6.0 * w2 / t.powi(4)),
    }
}

impl CausalSignal {
    /// `exp(-t^-2)`, the reference signal.
    pub fn smooth_bump() -> Self {
        CausalSignal::SmoothBump {
            amplitude: 1.0,
            width: 1.0,
        }
    }

    pub fn evaluate(&self, t: f64) -> f64 {
        self.eval_order(t, 0)
    }

    pub fn derivative(&self, t: f64, order: u32) -> Result<f64> {
        if !(1..=2).contains(&order) {
            return Err(Error::UnsupportedOrder(order));
        }
        Ok(self.eval_order(t, order))
    }

    fn eval_order(&self, t: f64, order: u32) -> f64 {
        match self {
            CausalSignal::SmoothBump { amplitude, width } => bump(*amplitude, *width, t, order),
            CausalSignal::DelayedSmoothBump {
                amplitude,
                width,
                delay,
            } => bump(*amplitude, *width, t - delay, order),
            CausalSignal::UserSampled(trace) => {
                if t <= 0.0 {
                    return 0.0;
                }
                let x = trace.index_of(t);
                let len = trace.len();
                if x < -NODE_SNAP {
                    return 0.0;
                }
                if x > (len - 1) as f64 {
                    return if order == 0 { trace.samples[len - 1] } else { 0.0 };
                }
                let x = x.max(0.0);
                if order == 0 {
                    return stencil(x, len, Interp::Cubic).apply(&trace.samples);
                }
                if len < 2 {
                    return 0.0;
                }
                let npts = len.min(4);
                let m = (x.floor() as usize).min(len - 2);
                let start = (m as isize - 1).clamp(0, (len - npts) as isize) as usize;
                let w = lagrange_weights(x - start as f64, npts, order);
                let s: f64 = trace.samples[start..start + npts]
                    .iter()
                    .zip(&w)
                    .map(|(v, w)| v * w)
                    .sum();
                s / trace.dt.powi(order as i32)
            }
        }
    }

    /// The same waveform multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        match self {
            CausalSignal::SmoothBump { amplitude, width } => CausalSignal::SmoothBump {
                amplitude: amplitude * k,
                width: *width,
            },
            CausalSignal::DelayedSmoothBump {
                amplitude,
                width,
                delay,
            } => CausalSignal::DelayedSmoothBump {
                amplitude: amplitude * k,
                width: *width,
                delay: *delay,
            },
            CausalSignal::UserSampled(trace) => {
                let mut t = trace.clone();
                t.samples.iter_mut().for_each(|v| *v *= k);
                CausalSignal::UserSampled(t)
            }
        }
    }

    /// `samples[k] = evaluate(t0 + k dt)`.
    pub fn sample(&self, t0: f64, dt: f64, n: usize) -> Result<Trace> {
        if !(dt > 0.0) || n < 2 {
            return invalid(format!("sampling needs dt > 0 and n >= 2 (dt = {dt}, n = {n})"));
        }
        Trace::new(t0, dt, (0..n).map(|k| self.evaluate(t0 + k as f64 * dt)).collect())
    }

    /// Configuration name of the signal kind.
    pub fn name(&self) -> &'static str {
        match self {
            CausalSignal::SmoothBump { .. } => "smooth-bump",
            CausalSignal::DelayedSmoothBump { .. } => "delayed-smooth-bump",
            CausalSignal::UserSampled(_) => "user-sampled",
        }
    }

    /// Configuration parameter list (empty for sampled signals).
    pub fn params(&self) -> Vec<f64> {
        match self {
            CausalSignal::SmoothBump { amplitude, width } => vec![*amplitude, *width],
            CausalSignal::DelayedSmoothBump {
                amplitude,
                width,
                delay,
            } => vec![*amplitude, *width, *delay],
            CausalSignal::UserSampled(_) => Vec::new(),
        }
    }

    /// Builds a signal from its configuration name and parameters.
    ///
    /// `smooth-bump [amplitude, width]` and
    /// `delayed-smooth-bump [amplitude, width, delay]` accept shorter
    /// parameter lists, with defaults `1, 1, 0`. `user-sampled` needs a trace.
    pub fn from_spec(name: &str, params: &[f64], trace: Option<Trace>) -> Result<Self> {
        let get = |k: usize, default: f64| params.get(k).copied().unwrap_or(default);
        let sig = match name {
            "smooth-bump" => CausalSignal::SmoothBump {
                amplitude: get(0, 1.0),
                width: get(1, 1.0),
            },
            "delayed-smooth-bump" => CausalSignal::DelayedSmoothBump {
                amplitude: get(0, 1.0),
                width: get(1, 1.0),
                delay: get(2, 0.0),
            },
            "user-sampled" => CausalSignal::UserSampled(
                trace.ok_or_else(|| Error::InvalidInput("user-sampled signal needs a trace file".into()))?,
            ),
            other => return invalid(format!("unknown signal '{other}'")),
        };
        match &sig {
            CausalSignal::SmoothBump { width, amplitude }
            | CausalSignal::DelayedSmoothBump { width, amplitude, .. } => {
                if !(*width > 0.0) || !amplitude.is_finite() {
                    return invalid("smooth bump needs width > 0 and a finite amplitude");
                }
            }
            CausalSignal::UserSampled(_) => {}
        }
        if let CausalSignal::DelayedSmoothBump { delay, .. } = sig {
            if delay < 0.0 {
                return invalid("delayed smooth bump needs delay >= 0 to stay causal");
            }
        }
        Ok(sig)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lambda(t: f64) -> f64 {
        if t > 0.0 {
            (-1.0 / (t * t)).exp()
        } else {
            0.0
        }
    }

    #[test]
    fn smooth_bump_values() {
        let s = CausalSignal::smooth_bump();
        assert_eq!(s.evaluate(-0.5), 0.0);
        assert_eq!(s.evaluate(0.0), 0.0);
        assert!((s.evaluate(1.0) - 0.367_879_441_171_442_3).abs() < 1e-15);
        assert!((s.evaluate(0.5) - 0.018_315_638_888_734_18).abs() < 1e-15);
        assert_eq!(s.derivative(-1.0, 1).unwrap(), 0.0);
        assert!((s.derivative(1.0, 1).unwrap() - 2.0 * (-1.0f64).exp()).abs() < 1e-15);
        assert!(matches!(s.derivative(1.0, 3), Err(Error::UnsupportedOrder(3))));
        assert!(matches!(s.derivative(1.0, 0), Err(Error::UnsupportedOrder(0))));
    }

    #[test]
    fn tiny_positive_time_is_zero_not_nan() {
        let s = CausalSignal::smooth_bump();
        for t in [1e-300, 1e-20, 1e-3] {
            assert_eq!(s.evaluate(t), 0.0);
            assert_eq!(s.derivative(t, 1).unwrap(), 0.0);
            assert_eq!(s.derivative(t, 2).unwrap(), 0.0);
        }
    }

    #[test]
    fn derivatives_match_central_differences() {
        // O(h^2) agreement: the error ratio under halving approaches 4.
        let s = CausalSignal::DelayedSmoothBump {
            amplitude: 1.3,
            width: 0.7,
            delay: 0.1,
        };
        for &t in &[0.3, 0.6, 1.1, 2.0] {
            let errs: Vec<f64> = [1e-2, 5e-3]
                .iter()
                .map(|&h| {
                    let fd = (s.evaluate(t + h) - s.evaluate(t - h)) / (2.0 * h);
                    (s.derivative(t, 1).unwrap() - fd).abs()
                })
                .collect();
            let order = (errs[0] / errs[1]).log2();
            assert!(order > 1.9 && order < 2.1, "t={t} order={order}");
            let h = 1e-4;
            let fd2 = (s.evaluate(t + h) - 2.0 * s.evaluate(t) + s.evaluate(t - h)) / (h * h);
            assert!((s.derivative(t, 2).unwrap() - fd2).abs() < 1e-5);
        }
    }

    #[test]
    fn sample_values() {
        let tr = CausalSignal::smooth_bump().sample(0.0, 0.1, 3).unwrap();
        assert_eq!(tr.samples()[0], 0.0);
        assert!((tr.samples()[1] / lambda(0.1) - 1.0).abs() < 1e-12);
        assert!((tr.samples()[2] - (-25.0f64).exp()).abs() < 1e-25);
        let pre = CausalSignal::smooth_bump().sample(-0.01 * 50.0, 0.01, 50).unwrap();
        assert!(pre.samples().iter().all(|&v| v == 0.0));
        assert!(CausalSignal::smooth_bump().sample(0.0, 0.1, 1).is_err());
        assert!(CausalSignal::smooth_bump().sample(0.0, 0.0, 5).is_err());
    }

    #[test]
    fn resampling_on_own_grid_is_identity() {
        let tr = CausalSignal::smooth_bump().sample(0.0, 0.05, 40).unwrap();
        for order in [Interp::Linear, Interp::Cubic] {
            let again = tr.resample(tr.t0(), tr.dt(), tr.len(), order).unwrap();
            assert_eq!(again, tr);
        }
    }

    #[test]
    fn interp_window_rules() {
        let tr = Trace::new(1.0, 0.5, vec![3.0, 4.0, 5.0, 7.0, 11.0]).unwrap();
        assert_eq!(tr.interp(0.99, Interp::Cubic).unwrap(), 0.0);
        assert_eq!(tr.interp(1.0, Interp::Cubic).unwrap(), 3.0);
        assert_eq!(tr.interp(3.0, Interp::Cubic).unwrap(), 11.0);
        assert!(matches!(tr.interp(3.1, Interp::Linear), Err(Error::OutOfWindow { .. })));
        for k in 0..tr.len() {
            assert_eq!(tr.interp(tr.time(k), Interp::Cubic).unwrap(), tr.samples()[k]);
            assert_eq!(tr.interp(tr.time(k), Interp::Linear).unwrap(), tr.samples()[k]);
        }
        assert!(matches!(tr.interp_upto(1.8, Interp::Cubic, 1), Err(Error::OutOfWindow { .. })));
    }

    #[test]
    fn linear_reproduces_ramp_and_cubic_reproduces_cubics() {
        let ramp = Trace::new(0.0, 0.1, (0..20).map(|k| 2.0 + 3.0 * k as f64 * 0.1).collect()).unwrap();
        let cubic = Trace::new(0.0, 0.1, (0..20).map(|k| (k as f64 * 0.1).powi(3) - 1.0).collect()).unwrap();
        for k in 0..19 {
            let t = (k as f64 + 0.5) * 0.1;
            assert!((ramp.interp(t, Interp::Linear).unwrap() - (2.0 + 3.0 * t)).abs() < 1e-13);
            // one-sided stencils at both ends stay exact for cubics
            assert!((cubic.interp(t, Interp::Cubic).unwrap() - (t.powi(3) - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn midpoint_errors_converge_at_interp_order() {
        let sig = CausalSignal::smooth_bump();
        let err = |dt: f64, order: Interp| {
            let n = (3.0 / dt).round() as usize + 1;
            let tr = sig.sample(0.0, dt, n).unwrap();
            (0..n - 1)
                .map(|k| {
                    let t = (k as f64 + 0.5) * dt;
                    (tr.interp(t, order).unwrap() - sig.evaluate(t)).abs()
                })
                .fold(0.0, f64::max)
        };
        for (order, min_rate) in [(Interp::Linear, 1.9), (Interp::Cubic, 3.8)] {
            let e1 = err(0.02, order);
            let e2 = err(0.01, order);
            let e3 = err(0.005, order);
            assert!((e1 / e2).log2() >= min_rate, "{order:?} {e1} {e2}");
            assert!((e2 / e3).log2() >= min_rate, "{order:?} {e2} {e3}");
        }
    }

    #[test]
    fn user_sampled_signal_follows_its_trace() {
        let base = CausalSignal::smooth_bump();
        let tr = base.sample(0.0, 0.01, 301).unwrap();
        let user = CausalSignal::UserSampled(tr.clone());
        assert_eq!(user.evaluate(-1.0), 0.0);
        assert!((user.evaluate(1.234) - base.evaluate(1.234)).abs() < 1e-7);
        assert!((user.derivative(1.234, 1).unwrap() - base.derivative(1.234, 1).unwrap()).abs() < 1e-5);
        // held after the record
        assert_eq!(user.evaluate(10.0), tr.samples()[300]);
        assert_eq!(user.derivative(10.0, 1).unwrap(), 0.0);
        assert_eq!(user.name(), "user-sampled");
    }

    #[test]
    fn spec_roundtrip_and_errors() {
        let s = CausalSignal::from_spec("delayed-smooth-bump", &[2.0, 0.5, 0.25], None).unwrap();
        assert_eq!(CausalSignal::from_spec(s.name(), &s.params(), None).unwrap(), s);
        assert!(CausalSignal::from_spec("square", &[], None).is_err());
        assert!(CausalSignal::from_spec("smooth-bump", &[1.0, 0.0], None).is_err());
        assert!(CausalSignal::from_spec("user-sampled", &[], None).is_err());
        assert_eq!(CausalSignal::from_spec("smooth-bump", &[], None).unwrap(), CausalSignal::smooth_bump());
    }

    #[test]
    fn csv_roundtrip() {
        let tr = CausalSignal::smooth_bump().sample(0.0, 0.125, 9).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("time,value\n"));
        assert_eq!(Trace::read_csv(&buf[..]).unwrap(), tr);
    }
}

//! Pump–probe simulation of a three-level emitter and extraction of the
//! population-recovery ratio from the fluorescence trace.
//!
//! Levels are `|1>`, `|2>` (ground orbital branches) and `|e>`. The pump
//! drives `|1> <-> |e>` at rate `omega`; `|e>` decays at `gamma_opt`, a
//! fraction `beta` into `|2>`. Phonons move population `|1> -> |2>` at
//! `gamma_up` and back at `gamma_down`. Rates are in MHz, times in ns.

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Default excited-state decay rate, 1/(1.7 ns) in MHz.
pub const DEFAULT_GAMMA_OPT_MHZ: f64 = 1e3 / 1.7;
pub const DEFAULT_BETA: f64 = 0.5;
pub const DEFAULT_OMEGA_MHZ: f64 = 1000.0;
pub const DEFAULT_WINDOW_NS: f64 = 10.0;
pub const DEFAULT_STEP_NS: f64 = 0.1;

/// MHz times ns.
const MHZ_NS: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelSystem {
    pub omega: f64,
    pub gamma_opt: f64,
    pub beta: f64,
    pub gamma_up: f64,
    pub gamma_down: f64,
}

impl LevelSystem {
    /// Default optics with orbital rates `gamma_up`, `gamma_down` (MHz).
    pub fn new(gamma_up: f64, gamma_down: f64) -> Self {
        LevelSystem {
            omega: DEFAULT_OMEGA_MHZ,
            gamma_opt: DEFAULT_GAMMA_OPT_MHZ,
            beta: DEFAULT_BETA,
            gamma_up,
            gamma_down,
        }
    }

    /// Orbital rates with `gamma_up + gamma_down = 1/t1` and the given
    /// ratio `gamma_up / gamma_down`.
    pub fn from_t1(t1_ns: f64, up_over_down: f64) -> Result<Self> {
        if !(t1_ns > 0.0 && t1_ns.is_finite()) {
            return Err(invalid(format!("T1 must be positive, got {t1_ns}")));
        }
        if !(up_over_down >= 0.0 && up_over_down.is_finite()) {
            return Err(invalid("rate ratio must be non-negative"));
        }
        let total = 1e3 / t1_ns;
        let down = total / (1.0 + up_over_down);
        Ok(LevelSystem::new(total - down, down))
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("omega", self.omega),
            ("gamma_opt", self.gamma_opt),
            ("gamma_up", self.gamma_up),
            ("gamma_down", self.gamma_down),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(invalid(format!("beta must lie in [0, 1], got {}", self.beta)));
        }
        Ok(())
    }

    /// Orbital relaxation time `1 / (gamma_up + gamma_down)` in ns.
    pub fn t1_ns(&self) -> f64 {
        1e3 / (self.gamma_up + self.gamma_down)
    }

    /// Largest rate in the generator for a pump scaled by `pump_scale`.
    fn max_rate(&self, pump_scale: f64) -> f64 {
        [self.omega * pump_scale, self.gamma_opt, self.gamma_up, self.gamma_down].into_iter().fold(0.0, f64::max)
    }

    /// Generator (per ns) acting on `(p1, p2, pe)`.
    pub fn generator(&self, pump_scale: f64) -> Matrix3<f64> {
        let w = self.omega * pump_scale * MHZ_NS;
        let g = self.gamma_opt * MHZ_NS;
        let (up, down) = (self.gamma_up * MHZ_NS, self.gamma_down * MHZ_NS);
        let b = self.beta;
        Matrix3::new(-w - up, down, w + g * (1.0 - b), up, -down, g * b, w, 0.0, -w - g)
    }

    /// Dark-state thermal populations `(p1, p2, 0)` with `p2/p1 = up/down`.
    pub fn thermal_state(&self) -> Vector3<f64> {
        let s = self.gamma_up + self.gamma_down;
        if s == 0.0 {
            Vector3::new(1.0, 0.0, 0.0)
        } else {
            Vector3::new(self.gamma_down / s, self.gamma_up / s, 0.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PulseProfile {
    Square,
    /// Amplitude rising linearly from 1 to `1 + rise` across each pulse.
    Ramp {
        rise: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSequence {
    pub width_ns: f64,
    pub delay_ns: f64,
    /// Dark time before the first pulse, included in the trace.
    pub repetition_gap_ns: f64,
    /// Dark time recorded after the second pulse.
    pub tail_ns: f64,
    pub profile: PulseProfile,
    pub step_ns: f64,
}

impl PulseSequence {
    pub fn new(delay_ns: f64) -> Self {
        PulseSequence {
            width_ns: 300.0,
            delay_ns,
            repetition_gap_ns: 20.0,
            tail_ns: 20.0,
            profile: PulseProfile::Square,
            step_ns: DEFAULT_STEP_NS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width_ns > 0.0 && self.width_ns.is_finite()) {
            return Err(invalid(format!("pulse width must be positive, got {}", self.width_ns)));
        }
        for (name, v) in [("delay", self.delay_ns), ("gap", self.repetition_gap_ns), ("tail", self.tail_ns)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !(self.step_ns > 0.0) {
            return Err(invalid("time step must be positive"));
        }
        if let PulseProfile::Ramp { rise } = self.profile {
            if !(rise > -1.0 && rise.is_finite()) {
                return Err(invalid("ramp must keep the amplitude positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluorescenceTrace {
    pub time_ns: Vec<f64>,
    /// `gamma_opt * p_e` (MHz), optionally with noise.
    pub signal: Vec<f64>,
    /// `(p1, p2, pe)` at each time.
    pub populations: Vec<[f64; 3]>,
    /// `(start, end)` of each pulse (ns).
    pub pulses: Vec<(f64, f64)>,
    /// Relative shot-noise level applied to `signal`, if any.
    pub noise_level: Option<f64>,
}

impl FluorescenceTrace {
    /// Integral of the signal over `[a, b]`, trapezoid rule with linear
    /// interpolation at the ends.
    pub fn integrate(&self, a: f64, b: f64) -> f64 {
        let t = &self.time_ns;
        let s = &self.signal;
        let value_at = |x: f64| -> f64 {
            let i = t.partition_point(|&v| v <= x).clamp(1, t.len() - 1);
            let (t0, t1) = (t[i - 1], t[i]);
            if t1 == t0 {
                return s[i];
            }
            s[i - 1] + (s[i] - s[i - 1]) * (x - t0) / (t1 - t0)
        };
        let mut acc = 0.0;
        let mut prev_t = a;
        let mut prev_s = value_at(a);
        for (&ti, &si) in t.iter().zip(s) {
            if ti <= a {
                continue;
            }
            if ti >= b {
                break;
            }
            acc += 0.5 * (ti - prev_t) * (si + prev_s);
            prev_t = ti;
            prev_s = si;
        }
        acc + 0.5 * (b - prev_t) * (value_at(b) + prev_s)
    }

    /// Adds Gaussian shot noise with standard deviation
    /// `level * sqrt(s * s_max)`, so the relative noise at the brightest
    /// point equals `level`. The signal is clipped at zero.
    pub fn add_noise(&mut self, level: f64, seed: u64) -> Result<()> {
        if !(level >= 0.0 && level.is_finite()) {
            return Err(invalid("noise level must be non-negative"));
        }
        let s_max = self.signal.iter().copied().fold(0.0, f64::max);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let unit = Normal::new(0.0, 1.0).expect("unit normal");
        for s in &mut self.signal {
            let sd = level * (s.max(0.0) * s_max).sqrt();
            *s = (*s + sd * unit.sample(&mut rng)).max(0.0);
        }
        self.noise_level = Some(level);
        Ok(())
    }

    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "time_ns,signal")?;
        for (t, s) in self.time_ns.iter().zip(&self.signal) {
            writeln!(out, "{t},{s}")?;
        }
        Ok(())
    }
}

// ============================================================================
// Integration
// ============================================================================

/// Propagates populations over one interval at constant or ramped pump.
struct Segment {
    duration: f64,
    pumped: bool,
}

fn check_step(system: &LevelSystem, seq: &PulseSequence) -> Result<()> {
    let peak = match seq.profile {
        PulseProfile::Square => 1.0,
        PulseProfile::Ramp { rise } => 1.0_f64.max(1.0 + rise),
    };
    let max_rate = system.max_rate(peak) * MHZ_NS;
    if max_rate > 0.0 && seq.step_ns > 0.1 / max_rate {
        return Err(Error::Configuration(format!(
            "time step {} ns does not resolve the fastest rate ({:.1} MHz); use at most {:.4} ns",
            seq.step_ns,
            max_rate / MHZ_NS,
            0.1 / max_rate
        )));
    }
    Ok(())
}

/// Dark or pumped evolution of `p` over `duration` ns.
pub fn evolve(system: &LevelSystem, p: [f64; 3], duration: f64, pumped: bool) -> Result<[f64; 3]> {
    system.validate()?;
    if !(duration >= 0.0) {
        return Err(invalid("duration must be non-negative"));
    }
    let a = system.generator(if pumped { 1.0 } else { 0.0 }) * duration;
    let v = a.exp() * Vector3::from(p);
    Ok([v[0], v[1], v[2]])
}

/// Simulates the two-pulse sequence starting from the thermal state.
pub fn simulate_sequence(system: &LevelSystem, seq: &PulseSequence) -> Result<FluorescenceTrace> {
    system.validate()?;
    seq.validate()?;
    check_step(system, seq)?;
    let segments = [
        Segment { duration: seq.repetition_gap_ns, pumped: false },
        Segment { duration: seq.width_ns, pumped: true },
        Segment { duration: seq.delay_ns, pumped: false },
        Segment { duration: seq.width_ns, pumped: true },
        Segment { duration: seq.tail_ns, pumped: false },
    ];
    let mut p = system.thermal_state();
    let mut t = 0.0;
    let mut trace = FluorescenceTrace {
        time_ns: vec![0.0],
        signal: vec![system.gamma_opt * p[2]],
        populations: vec![[p[0], p[1], p[2]]],
        pulses: Vec::new(),
        noise_level: None,
    };
    for seg in &segments {
        if seg.duration == 0.0 {
            if seg.pumped {
                trace.pulses.push((t, t));
            }
            continue;
        }
        let n = (seg.duration / seq.step_ns).ceil().max(1.0) as usize;
        let h = seg.duration / n as f64;
        let start = t;
        if seg.pumped {
            trace.pulses.push((start, start + seg.duration));
        }
        let fixed = match (seg.pumped, seq.profile) {
            (false, _) => Some((system.generator(0.0) * h).exp()),
            (true, PulseProfile::Square) => Some((system.generator(1.0) * h).exp()),
            (true, PulseProfile::Ramp { .. }) => None,
        };
        for i in 0..n {
            let step = match (&fixed, seq.profile) {
                (Some(m), _) => *m,
                (None, PulseProfile::Ramp { rise }) => {
                    // Midpoint amplitude of this step.
                    let frac = (i as f64 + 0.5) / n as f64;
                    (system.generator(1.0 + rise * frac) * h).exp()
                }
                (None, PulseProfile::Square) => unreachable!(),
            };
            p = step * p;
            t = start + h * (i + 1) as f64;
            trace.time_ns.push(t);
            trace.signal.push((system.gamma_opt * p[2]).max(0.0));
            trace.populations.push([p[0], p[1], p[2]]);
        }
        t = start + seg.duration;
    }
    let drift = (p.sum() - 1.0).abs();
    if drift > 1e-9 {
        return Err(Error::Numerical(format!("population drifted by {drift:e}")));
    }
    Ok(trace)
}

// ============================================================================
// Extraction
// ============================================================================

/// `(I_peak2 - I_st2) / (I_peak1 - I_st1)`: leading-edge window integral
/// minus the late stationary window of each pulse.
pub fn extract_peak_ratio(trace: &FluorescenceTrace, window_ns: f64) -> Result<f64> {
    if !(window_ns > 0.0) {
        return Err(Error::Extraction("window must be positive".into()));
    }
    if trace.pulses.len() != 2 {
        return Err(Error::Extraction(format!("expected two pulses, found {}", trace.pulses.len())));
    }
    let mut contrast = [0.0; 2];
    for (c, &(start, end)) in contrast.iter_mut().zip(&trace.pulses) {
        if end - start < 2.0 * window_ns {
            return Err(Error::Extraction(format!(
                "pulse of {:.1} ns is too short for two {window_ns} ns windows",
                end - start
            )));
        }
        *c = trace.integrate(start, start + window_ns) - trace.integrate(end - window_ns, end);
    }
    if !(contrast[0].abs() > 1e-12 * trace.integrate(trace.pulses[0].0, trace.pulses[0].1).abs().max(1e-300)) {
        return Err(Error::Extraction("first pulse shows no leading-edge contrast".into()));
    }
    Ok(contrast[1] / contrast[0])
}

/// Shot noise applied to each simulated trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub level: f64,
    pub seed: u64,
}

/// Recovery ratio for each delay. Delays run in parallel; trace `i` uses
/// seed `seed + i` so results do not depend on scheduling.
pub fn thermalization_curve(
    system: &LevelSystem,
    template: &PulseSequence,
    taus: &[f64],
    window_ns: f64,
    noise: Option<NoiseSpec>,
) -> Result<Vec<(f64, f64)>> {
    if taus.is_empty() {
        return Err(invalid("at least one delay is required"));
    }
    taus.par_iter()
        .enumerate()
        .map(|(i, &tau)| {
            let seq = PulseSequence { delay_ns: tau, ..*template };
            let mut trace = simulate_sequence(system, &seq)?;
            if let Some(n) = noise {
                trace.add_noise(n.level, n.seed.wrapping_add(i as u64))?;
            }
            Ok((tau, extract_peak_ratio(&trace, window_ns)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_drive_means_no_light() {
        let mut s = LevelSystem::from_t1(34.0, 0.5).unwrap();
        s.omega = 0.0;
        let tr = simulate_sequence(&s, &PulseSequence::new(30.0)).unwrap();
        assert!(tr.signal.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn coarse_step_is_a_configuration_error() {
        let s = LevelSystem::from_t1(34.0, 0.5).unwrap();
        let seq = PulseSequence { step_ns: 1.0, ..PulseSequence::new(10.0) };
        assert!(matches!(simulate_sequence(&s, &seq), Err(Error::Configuration(_))));
    }

    #[test]
    fn integrate_handles_partial_intervals() {
        let tr = FluorescenceTrace {
            time_ns: vec![0.0, 1.0, 2.0, 3.0],
            signal: vec![0.0, 1.0, 2.0, 3.0],
            populations: vec![[0.0; 3]; 4],
            pulses: vec![],
            noise_level: None,
        };
        assert!((tr.integrate(0.5, 2.5) - 3.0).abs() < 1e-12);
        assert!((tr.integrate(0.0, 3.0) - 4.5).abs() < 1e-12);
    }

    #[test]
    fn zero_delay_gives_no_recovery() {
        let s = LevelSystem::from_t1(34.0, 0.5).unwrap();
        let tr = simulate_sequence(&s, &PulseSequence::new(0.0)).unwrap();
        let r = extract_peak_ratio(&tr, DEFAULT_WINDOW_NS).unwrap();
        assert!(r.abs() < 1e-3, "{r}");
    }
}

//! Plasma glucose trajectories from the Bergman minimal model with meal, exercise and
//! dawn forcing, and the plasma-to-interstitial lag.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::foundation::{GlucoseConfig, RandomStream};

pub const DAY_MINUTES: usize = 1440;
pub const GLUCOSE_MIN: f64 = 60.0;
pub const GLUCOSE_MAX: f64 = 400.0;

const DAWN_START: f64 = 270.0;
const DAWN_END: f64 = 360.0;
const MEAL_TIMES: [f64; 3] = [450.0, 750.0, 1110.0];
const MEAL_JITTER: f64 = 45.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BergmanParams {
    pub basal: f64,
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    pub k_abs: f64,
}

impl BergmanParams {
    /// Population-default parameters with basal glucose `basal`.
    pub fn default_with_basal(cfg: &GlucoseConfig, basal: f64) -> Self {
        Self {
            basal,
            p1: cfg.p1,
            p2: cfg.p2,
            p3: cfg.p3,
            k_abs: cfg.k_abs,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.p1, self.p2, self.p3, self.k_abs].iter().all(|r| *r > 0.0) && self.basal > 0.0 {
            Ok(())
        } else {
            Err(Error::Parameter("Bergman rates and basal glucose must be > 0".into()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Meal,
    Exercise,
    Dawn,
}

/// A forcing event. For meals `magnitude` is the total glucose appearance in mg/dL;
/// for exercise and dawn it is a constant rate in mg/dL/min held for `duration_min`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlucoseEvent {
    pub kind: EventKind,
    pub start_min: f64,
    pub magnitude: f64,
    pub duration_min: f64,
}

impl GlucoseEvent {
    pub fn meal(start_min: f64, appearance: f64) -> Self {
        Self {
            kind: EventKind::Meal,
            start_min,
            magnitude: appearance,
            duration_min: f64::INFINITY,
        }
    }

    pub fn exercise(start_min: f64, rate: f64, duration_min: f64) -> Self {
        Self {
            kind: EventKind::Exercise,
            start_min,
            magnitude: rate,
            duration_min,
        }
    }

    /// Dawn surge over 04:30–06:00.
    pub fn dawn(rate: f64) -> Self {
        Self {
            kind: EventKind::Dawn,
            start_min: DAWN_START,
            magnitude: rate,
            duration_min: DAWN_END - DAWN_START,
        }
    }

    /// Signed glucose rate contributed at minute `t`.
    fn rate(&self, t: f64, k_abs: f64) -> f64 {
        let dt = t - self.start_min;
        if dt < 0.0 || dt >= self.duration_min {
            return 0.0;
        }
        match self.kind {
            EventKind::Meal => self.magnitude * k_abs * k_abs * dt * (-k_abs * dt).exp(),
            EventKind::Exercise => -self.magnitude,
            EventKind::Dawn => self.magnitude,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlucoseTrajectory {
    /// One value per minute starting at midnight.
    pub plasma: Vec<f64>,
    pub interstitial: Vec<f64>,
    pub events: Vec<GlucoseEvent>,
    pub tau: f64,
    /// Number of samples moved onto the [60, 400] bounds.
    pub clamped: usize,
}

impl GlucoseTrajectory {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("t_min,plasma_mgdl,interstitial_mgdl\n");
        for (t, (p, i)) in self.plasma.iter().zip(&self.interstitial).enumerate() {
            out.push_str(&format!("{t},{p},{i}\n"));
        }
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(out.as_bytes()))
            .map_err(|e| Error::io(path, e))
    }
}

/// Explicit-Euler integration at 1-minute steps, unclamped.
pub fn simulate_plasma(params: &BergmanParams, events: &[GlucoseEvent], minutes: usize) -> Vec<f64> {
    let mut g = params.basal;
    let mut x = 0.0;
    let mut out = Vec::with_capacity(minutes);
    for step in 0..minutes {
        out.push(g);
        let t = step as f64;
        let forcing: f64 = events.iter().map(|e| e.rate(t, params.k_abs)).sum();
        let dg = -params.p1 * (g - params.basal) - x * g + forcing;
        let dx = -params.p2 * x + params.p3 * (g - params.basal).max(0.0);
        g += dg;
        x += dx;
    }
    out
}

/// First-order lag `dG_i/dt = (G_p − G_i)/τ` advanced exactly over each 1-minute step
/// with the plasma value held constant across the step.
pub fn interstitial_lag(plasma: &[f64], tau: f64) -> Result<Vec<f64>> {
    if !(7.0..=15.0).contains(&tau) {
        return Err(Error::Domain(format!("interstitial lag τ = {tau} min outside [7, 15]")));
    }
    let alpha = 1.0 - (-1.0 / tau).exp();
    let mut out = Vec::with_capacity(plasma.len());
    let mut gi = match plasma.first() {
        Some(g) => *g,
        None => return Ok(out),
    };
    for &gp in plasma {
        out.push(gi);
        gi += alpha * (gp - gi);
    }
    Ok(out)
}

fn clamp_series(series: &mut [f64]) -> usize {
    let mut count = 0;
    for v in series.iter_mut() {
        let c = v.clamp(GLUCOSE_MIN, GLUCOSE_MAX);
        if c != *v {
            count += 1;
            *v = c;
        }
    }
    count
}

/// Per-subject parameters and event schedule for one day.
pub fn sample_day(cfg: &GlucoseConfig, rng: &mut RandomStream) -> (BergmanParams, Vec<GlucoseEvent>, f64) {
    let basal = rng.uniform(cfg.basal_min, cfg.basal_max);
    let params = BergmanParams {
        basal,
        p1: cfg.p1 * rng.uniform(cfg.effectiveness_min, 1.0),
        p2: cfg.p2,
        p3: cfg.p3 * rng.uniform(cfg.sensitivity_min, cfg.sensitivity_max),
        k_abs: cfg.k_abs,
    };
    let meal_scale = rng.uniform(cfg.meal_scale_min, cfg.meal_scale_max);
    let mut events: Vec<GlucoseEvent> = MEAL_TIMES
        .iter()
        .map(|t| {
            let start = t + rng.uniform(-MEAL_JITTER, MEAL_JITTER);
            GlucoseEvent::meal(start, cfg.meal_appearance * meal_scale * rng.uniform(0.8, 1.2))
        })
        .collect();
    if rng.bernoulli(cfg.exercise_probability) {
        events.push(GlucoseEvent::exercise(
            rng.uniform(600.0, 1200.0),
            cfg.exercise_rate,
            cfg.exercise_minutes,
        ));
    }
    if rng.bernoulli(cfg.dawn_probability) {
        events.push(GlucoseEvent::dawn(cfg.dawn_rate));
    }
    let tau = rng.uniform(cfg.tau_min, cfg.tau_max);
    (params, events, tau)
}

/// Simulates a full day for one subject, clamping both series to [60, 400].
pub fn simulate_day(cfg: &GlucoseConfig, rng: &mut RandomStream) -> Result<GlucoseTrajectory> {
    let (params, events, tau) = sample_day(cfg, rng);
    params.validate()?;
    let mut plasma = simulate_plasma(&params, &events, DAY_MINUTES);
    let mut clamped = clamp_series(&mut plasma);
    let mut interstitial = interstitial_lag(&plasma, tau)?;
    clamped += clamp_series(&mut interstitial);
    Ok(GlucoseTrajectory {
        plasma,
        interstitial,
        events,
        tau,
        clamped,
    })
}

/// `n` sorted measurement minutes, uniform over the day and at least `min_sep` apart.
pub fn sample_measurement_times(n: usize, minutes: usize, min_sep: f64, rng: &mut RandomStream) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::Parameter("need at least one measurement".into()));
    }
    if (n - 1) as f64 * min_sep >= minutes as f64 {
        return Err(Error::Parameter(format!(
            "cannot place {n} measurements {min_sep} min apart in {minutes} min"
        )));
    }
    for _ in 0..100_000 {
        let mut times: Vec<usize> = (0..n).map(|_| rng.below(minutes)).collect();
        times.sort_unstable();
        if times.windows(2).all(|w| (w[1] - w[0]) as f64 >= min_sep) {
            return Ok(times);
        }
    }
    Err(Error::Parameter(format!(
        "could not place {n} measurements {min_sep} min apart"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn default_params() -> BergmanParams {
        BergmanParams::default_with_basal(&GlucoseConfig::default(), 100.0)
    }

    #[test]
    fn no_events_stays_basal() {
        let g = simulate_plasma(&default_params(), &[], DAY_MINUTES);
        assert!(g.iter().all(|v| *v == 100.0));
    }

    #[test]
    fn default_meal_peak() {
        let cfg = GlucoseConfig::default();
        let t0 = 300.0;
        let g = simulate_plasma(&default_params(), &[GlucoseEvent::meal(t0, cfg.meal_appearance)], DAY_MINUTES);
        let (idx, peak) = g.iter().enumerate().fold((0, 0.0), |a, (i, v)| if *v > a.1 { (i, *v) } else { a });
        let excess = peak - 100.0;
        assert!((40.0..=70.0).contains(&excess), "peak excess {excess}");
        let lag = idx as f64 - t0;
        assert!((30.0..=50.0).contains(&lag), "peak at +{lag} min");
    }

    #[test]
    fn dawn_surge() {
        let cfg = GlucoseConfig::default();
        let g = simulate_plasma(&default_params(), &[GlucoseEvent::dawn(cfg.dawn_rate)], DAY_MINUTES);
        let baseline = g[DAWN_START as usize];
        let surge = g[DAWN_START as usize..=DAWN_END as usize].iter().cloned().fold(f64::MIN, f64::max) - baseline;
        assert!((10.0..=30.0).contains(&surge), "surge {surge}");
    }

    #[test]
    fn exercise_dip() {
        let cfg = GlucoseConfig::default();
        let ev = GlucoseEvent::exercise(600.0, cfg.exercise_rate, cfg.exercise_minutes);
        let g = simulate_plasma(&default_params(), &[ev], DAY_MINUTES);
        let dip = 100.0 - g.iter().cloned().fold(f64::MAX, f64::min);
        assert!((20.0..=40.0).contains(&dip), "dip {dip}");
    }

    #[test]
    fn lag_examples() {
        let flat = vec![120.0; 100];
        assert_eq!(interstitial_lag(&flat, 10.0).unwrap(), flat);
        for tau in [7.0, 10.0, 15.0] {
            let mut step = vec![0.0; 1];
            step.extend(vec![1.0; 60]);
            let gi = interstitial_lag(&step, tau).unwrap();
            // value τ minutes after the step became visible to the filter
            let v = gi[1 + tau as usize];
            let expected = 1.0 - (-1.0f64).exp();
            assert!((v - expected).abs() <= 0.01, "τ = {tau}: {v}");
        }
        let ramp: Vec<f64> = (0..200).map(|t| 100.0 + t as f64).collect();
        let fast = interstitial_lag(&ramp, 7.0).unwrap();
        let slow = interstitial_lag(&ramp, 15.0).unwrap();
        assert!(fast.iter().zip(&slow).skip(2).all(|(f, s)| s < f));
        assert!(interstitial_lag(&ramp, 5.0).is_err());
        assert!(interstitial_lag(&ramp, 16.0).is_err());
    }

    #[test]
    fn measurement_times() {
        let mut rng = RandomStream::new(1).derive("times");
        let t = sample_measurement_times(3, DAY_MINUTES, 60.0, &mut rng).unwrap();
        assert_eq!(t.len(), 3);
        assert!(t.windows(2).all(|w| w[1] - w[0] >= 60));
        let again = sample_measurement_times(3, DAY_MINUTES, 60.0, &mut RandomStream::new(1).derive("times")).unwrap();
        assert_eq!(t, again);
        assert_eq!(sample_measurement_times(1, DAY_MINUTES, 60.0, &mut rng).unwrap().len(), 1);
        assert!(matches!(
            sample_measurement_times(30, DAY_MINUTES, 60.0, &mut rng),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn population_spread() {
        let cfg = GlucoseConfig::default();
        let mut rng = RandomStream::new(5).derive("glucose");
        let mut values = Vec::new();
        for _ in 0..200 {
            let day = simulate_day(&cfg, &mut rng).unwrap();
            assert!(day.plasma.iter().chain(&day.interstitial).all(|g| (60.0..=400.0).contains(g)));
            values.extend(day.interstitial.iter().step_by(97).copied());
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64).sqrt();
        assert!(sd > 25.0, "sd {sd}");
    }

    fn total_variation(v: &[f64]) -> f64 {
        v.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
    }

    proptest! {
        #[test]
        fn lag_contracts_and_smooths(seed in 0u64..200, tau in 7.0f64..=15.0) {
            let mut rng = RandomStream::new(seed).derive("lag");
            let plasma: Vec<f64> = (0..300).map(|_| rng.uniform(60.0, 400.0)).collect();
            let gi = interstitial_lag(&plasma, tau).unwrap();
            prop_assert!(total_variation(&gi) <= total_variation(&plasma) + 1e-9);
            let lo = plasma.iter().cloned().fold(f64::MAX, f64::min);
            let hi = plasma.iter().cloned().fold(f64::MIN, f64::max);
            prop_assert!(gi.iter().all(|g| *g >= lo - 1e-9 && *g <= hi + 1e-9));
            let dev = gi.iter().zip(&plasma).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            prop_assert!(dev <= hi - lo + 1e-9);
        }
    }
}

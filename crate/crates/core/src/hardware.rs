//! ESP32-class sensing chain: LED emission with thermal and ageing drift, photodiode
//! current budget, transimpedance stage and a 12-bit ADC with INL and offset drift.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::foundation::{HardwareConfig, PhysicalConstants, RandomStream};

pub const ADC_BITS: u32 = 12;
pub const ADC_MAX: u16 = 4095;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedModel {
    pub nominal_power_mw: f64,
    pub wavelength: u32,
    pub age_hours: f64,
    pub flicker_sd: f64,
}

impl LedModel {
    pub fn new(nominal_power_mw: f64, wavelength: u32, age_hours: f64, flicker_sd: f64) -> Result<Self> {
        if !(nominal_power_mw > 0.0) || !(age_hours >= 0.0) || !(flicker_sd >= 0.0) {
            return Err(Error::Parameter(format!(
                "LED needs P0 > 0, age ≥ 0, flicker ≥ 0 (got {nominal_power_mw}, {age_hours}, {flicker_sd})"
            )));
        }
        Ok(Self {
            nominal_power_mw,
            wavelength,
            age_hours,
            flicker_sd,
        })
    }
}

/// Emitted power in mW at junction temperature `temp_c`.
pub fn led_power(led: &LedModel, temp_c: f64, rng: &mut RandomStream, noise: bool) -> f64 {
    let flicker = if noise {
        rng.gaussian(0.0, led.flicker_sd)
    } else {
        0.0
    };
    let factor = 1.0 - 0.002 * (temp_c - 25.0) - 0.001 * led.age_hours / 1000.0 + flicker;
    (led.nominal_power_mw * factor).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotodiodeModel {
    /// (wavelength nm, A/W) pairs.
    pub responsivity: Vec<(u32, f64)>,
    pub dark_current_25: f64,
    pub bandwidth_hz: f64,
    pub load_resistance_ohm: f64,
}

impl PhotodiodeModel {
    pub fn flat(wavelengths: &[u32], responsivity: f64, dark_current_25: f64, bandwidth_hz: f64, load_resistance_ohm: f64) -> Result<Self> {
        let pd = Self {
            responsivity: wavelengths.iter().map(|w| (*w, responsivity)).collect(),
            dark_current_25,
            bandwidth_hz,
            load_resistance_ohm,
        };
        pd.validate()?;
        Ok(pd)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.responsivity.iter().all(|(_, r)| *r > 0.0)
            && self.dark_current_25 > 0.0
            && self.bandwidth_hz > 0.0
            && self.load_resistance_ohm > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Parameter("photodiode parameters must all be > 0".into()))
        }
    }

    pub fn responsivity_at(&self, wavelength: u32) -> Result<f64> {
        self.responsivity
            .iter()
            .find(|(w, _)| *w == wavelength)
            .map(|(_, r)| *r)
            .ok_or(Error::UnknownWavelength(wavelength))
    }

    pub fn dark_current(&self, temp_c: f64) -> f64 {
        self.dark_current_25 * (0.1 * (temp_c - 25.0)).exp()
    }

    pub fn shot_noise_sd(&self, i_sig: f64, i_dark: f64) -> f64 {
        (2.0 * PhysicalConstants::ELECTRON_CHARGE * (i_sig + i_dark) * self.bandwidth_hz).sqrt()
    }

    pub fn thermal_noise_sd(&self, temp_c: f64) -> f64 {
        let t_k = temp_c + 273.15;
        (4.0 * PhysicalConstants::BOLTZMANN * t_k * self.bandwidth_hz / self.load_resistance_ohm).sqrt()
    }
}

/// Current budget in amperes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotodiodeCurrents {
    pub signal: f64,
    pub dark: f64,
    pub shot: f64,
    pub thermal: f64,
    pub total: f64,
}

pub fn photodiode_currents(
    pd: &PhotodiodeModel,
    wavelength: u32,
    p_opt_mw: f64,
    temp_c: f64,
    rng: &mut RandomStream,
    noise: bool,
) -> Result<PhotodiodeCurrents> {
    if !(p_opt_mw >= 0.0) {
        return Err(Error::Domain(format!("optical power {p_opt_mw} mW is negative")));
    }
    let signal = pd.responsivity_at(wavelength)? * p_opt_mw * 1e-3;
    let dark = pd.dark_current(temp_c);
    let (shot, thermal) = if noise {
        (
            rng.gaussian(0.0, pd.shot_noise_sd(signal, dark)),
            rng.gaussian(0.0, pd.thermal_noise_sd(temp_c)),
        )
    } else {
        (0.0, 0.0)
    };
    Ok(PhotodiodeCurrents {
        signal,
        dark,
        shot,
        thermal,
        total: signal + dark + shot + thermal,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdcModel {
    pub v_ref: f64,
    pub tia_gain: f64,
    pub inl_amplitude: f64,
    /// Phase of the INL sine, fixed per device.
    pub inl_phase: f64,
    pub offset_drift_per_degc: f64,
}

impl AdcModel {
    /// Builds an ADC, drawing the INL phase from `rng`.
    pub fn new(v_ref: f64, tia_gain: f64, inl_amplitude: f64, offset_drift_per_degc: f64, rng: &mut RandomStream) -> Result<Self> {
        if !(v_ref > 0.0) || !(tia_gain > 0.0) {
            return Err(Error::Parameter(format!(
                "ADC needs V_ref > 0 and G_TIA > 0 (got {v_ref}, {tia_gain})"
            )));
        }
        Ok(Self {
            v_ref,
            tia_gain,
            inl_amplitude,
            inl_phase: rng.uniform(0.0, 2.0 * PI),
            offset_drift_per_degc,
        })
    }

    /// Ideal converter: no INL, no offset drift.
    pub fn ideal(v_ref: f64, tia_gain: f64) -> Self {
        Self {
            v_ref,
            tia_gain,
            inl_amplitude: 0.0,
            inl_phase: 0.0,
            offset_drift_per_degc: 0.0,
        }
    }

    /// Transimpedance gain placing `current` at `1/headroom` of full scale.
    pub fn gain_for_full_scale(v_ref: f64, current: f64, headroom: f64) -> f64 {
        v_ref / (headroom * current)
    }

    pub fn current_per_code(&self) -> f64 {
        self.v_ref / (ADC_MAX as f64 * self.tia_gain)
    }
}

pub fn adc_read(adc: &AdcModel, i_tot: f64, temp_c: f64) -> u16 {
    let v_in = i_tot.max(0.0) * adc.tia_gain;
    let base = (v_in / adc.v_ref * ADC_MAX as f64).round_ties_even();
    let inl = (adc.inl_amplitude * (2.0 * PI * base / ADC_MAX as f64 + adc.inl_phase).sin()).round_ties_even();
    let offset = (adc.offset_drift_per_degc * (temp_c - 25.0)).round_ties_even();
    (base + inl + offset).clamp(0.0, ADC_MAX as f64) as u16
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralChannelReading {
    pub wavelength: u32,
    pub code: u16,
    /// Noise-free `P0 · e^{-A}` in mW.
    pub debug_intensity_mw: f64,
    pub detector_power_mw: f64,
    pub currents: PhotodiodeCurrents,
}

/// Everything between the tissue and the ADC code for one channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpticalPath {
    pub absorbance: f64,
    pub coupling: f64,
    pub ambient_mw: f64,
    pub temperature_c: f64,
}

pub fn channel_measurement(
    led: &LedModel,
    pd: &PhotodiodeModel,
    adc: &AdcModel,
    path: &OpticalPath,
    rng: &mut RandomStream,
    noise: bool,
) -> Result<SpectralChannelReading> {
    if !(path.absorbance >= 0.0) {
        return Err(Error::Domain(format!(
            "absorbance {} at {} nm is negative",
            path.absorbance, led.wavelength
        )));
    }
    let transmission = (-path.absorbance).exp();
    let emitted = led_power(led, path.temperature_c, rng, noise);
    let detector_power_mw = emitted * transmission * path.coupling + path.ambient_mw;
    let currents = photodiode_currents(pd, led.wavelength, detector_power_mw, path.temperature_c, rng, noise)?;
    let code = adc_read(adc, currents.total.max(0.0), path.temperature_c);
    Ok(SpectralChannelReading {
        wavelength: led.wavelength,
        code,
        debug_intensity_mw: led.nominal_power_mw * transmission,
        detector_power_mw,
        currents,
    })
}

/// One physical sensor: an LED per channel, a shared photodiode and ADC, and a
/// per-channel transimpedance gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Device {
    pub leds: Vec<LedModel>,
    pub photodiode: PhotodiodeModel,
    pub adcs: Vec<AdcModel>,
    pub coupling: f64,
}

impl Device {
    pub fn new(cfg: &HardwareConfig, wavelengths: &[u32], gains: &[f64], rng: &mut RandomStream) -> Result<Self> {
        if gains.len() != wavelengths.len() {
            return Err(Error::Dimension(format!(
                "{} gains for {} channels",
                gains.len(),
                wavelengths.len()
            )));
        }
        let leds = wavelengths
            .iter()
            .map(|w| LedModel::new(cfg.led_power_mw, *w, cfg.led_age_hours, cfg.led_flicker_sd))
            .collect::<Result<Vec<_>>>()?;
        let photodiode = PhotodiodeModel::flat(
            wavelengths,
            cfg.responsivity_a_per_w,
            cfg.dark_current_a,
            cfg.bandwidth_hz,
            cfg.load_resistance_ohm,
        )?;
        let phase_source = AdcModel::new(cfg.v_ref, 1.0, cfg.inl_amplitude, cfg.offset_drift_per_degc, rng)?;
        let adcs = gains
            .iter()
            .map(|g| {
                if *g > 0.0 {
                    Ok(AdcModel {
                        tia_gain: *g,
                        ..phase_source.clone()
                    })
                } else {
                    Err(Error::Parameter(format!("TIA gain {g} must be > 0")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            leds,
            photodiode,
            adcs,
            coupling: cfg.coupling,
        })
    }

    pub fn wavelengths(&self) -> Vec<u32> {
        self.leds.iter().map(|l| l.wavelength).collect()
    }

    /// Measures channel `idx` with the LED aged by an extra `extra_age_hours`.
    pub fn measure(
        &self,
        idx: usize,
        path: &OpticalPath,
        extra_age_hours: f64,
        rng: &mut RandomStream,
        noise: bool,
    ) -> Result<SpectralChannelReading> {
        let mut led = self.leds[idx].clone();
        led.age_hours += extra_age_hours;
        channel_measurement(&led, &self.photodiode, &self.adcs[idx], path, rng, noise)
    }

    /// Inverts the ideal signal chain: the LED-referred intensity `P_det / coupling` in mW
    /// that would produce `code`.
    pub fn code_to_intensity(&self, idx: usize, code: u16) -> f64 {
        let adc = &self.adcs[idx];
        let r = self.photodiode.responsivity[idx].1;
        code as f64 * adc.current_per_code() / r / self.coupling * 1e3
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rng() -> RandomStream {
        RandomStream::new(7).derive("hw")
    }

    fn led(age: f64) -> LedModel {
        LedModel::new(5.0, 850, age, 0.001).unwrap()
    }

    #[test]
    fn led_examples() {
        let mut r = rng();
        assert_eq!(led_power(&led(0.0), 25.0, &mut r, false), 5.0);
        assert!((led_power(&led(0.0), 35.0, &mut r, false) - 0.98 * 5.0).abs() < 1e-12);
        assert!((led_power(&led(1000.0), 25.0, &mut r, false) - 0.999 * 5.0).abs() < 1e-12);
        assert_eq!(led_power(&led(2_000_000.0), 25.0, &mut r, false), 0.0);
    }

    #[test]
    fn led_flicker_statistics() {
        let mut r = rng();
        let draws: Vec<f64> = (0..20_000).map(|_| led_power(&led(0.0), 25.0, &mut r, true) / 5.0 - 1.0).collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let sd = (draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / draws.len() as f64).sqrt();
        assert!(mean.abs() < 3e-5);
        assert!((sd - 0.001).abs() < 5e-5);
    }

    fn pd() -> PhotodiodeModel {
        PhotodiodeModel::flat(&[850], 0.5, 2e-9, 1e3, 1e6).unwrap()
    }

    #[test]
    fn photodiode_examples() {
        let mut r = rng();
        let c = photodiode_currents(&pd(), 850, 1.0, 25.0, &mut r, false).unwrap();
        assert_eq!(c.dark, 2e-9);
        assert!((c.signal - 5e-4).abs() < 1e-18);
        assert_eq!(c.total, c.signal + c.dark);
        let c = photodiode_currents(&pd(), 850, 1.0, 35.0, &mut r, false).unwrap();
        assert!((c.dark / 2e-9 - std::f64::consts::E).abs() < 1e-12);
        let wide = PhotodiodeModel {
            bandwidth_hz: 1e4,
            ..pd()
        };
        assert!((wide.shot_noise_sd(1e-6 - 2e-9, 2e-9) - 5.6607e-11).abs() < 1e-14);
        // Johnson noise at 25 °C, 1 kHz, 1 MΩ: √(4·k·298.15·1e3/1e6)
        let expected = (4.0 * 1.380649e-23 * 298.15 * 1e3 / 1e6f64).sqrt();
        assert!((pd().thermal_noise_sd(25.0) - expected).abs() < 1e-20);
        assert!(photodiode_currents(&pd(), 940, 1.0, 25.0, &mut r, false).is_err());
    }

    #[test]
    fn shot_noise_sd_matches_sample() {
        let mut r = rng();
        let p = pd();
        let sd = p.shot_noise_sd(5e-4, 2e-9);
        let n = 20_000;
        let var = (0..n)
            .map(|_| photodiode_currents(&p, 850, 1.0, 25.0, &mut r, true).unwrap().shot.powi(2))
            .sum::<f64>()
            / n as f64;
        assert!((var.sqrt() / sd - 1.0).abs() < 0.03);
    }

    #[test]
    fn adc_examples() {
        let adc = AdcModel::ideal(3.3, 1e4);
        let i_for = |v: f64| v / 1e4;
        assert_eq!(adc_read(&adc, 0.0, 25.0), 0);
        assert_eq!(adc_read(&adc, i_for(3.3), 25.0), 4095);
        assert_eq!(adc_read(&adc, i_for(1.65), 25.0), 2048);
        assert_eq!(adc_read(&adc, i_for(10.0), 25.0), 4095);
    }

    #[test]
    fn adc_offset_and_inl() {
        let adc = AdcModel {
            offset_drift_per_degc: 0.2,
            ..AdcModel::ideal(3.3, 1.0)
        };
        // 0.2 · 20 = 4 codes
        assert_eq!(adc_read(&adc, 1.0, 45.0), adc_read(&adc, 1.0, 25.0) + 4);
        let mut r = rng();
        let noisy = AdcModel::new(3.3, 1.0, 2.0, 0.0, &mut r).unwrap();
        let ideal = AdcModel::ideal(3.3, 1.0);
        for k in 0..200 {
            let v = 3.3 * (k as f64 + 0.25) / 200.0;
            let d = adc_read(&noisy, v, 25.0) as i32 - adc_read(&ideal, v, 25.0) as i32;
            assert!(d.abs() <= 2);
        }
    }

    #[test]
    fn adc_surjective_over_range() {
        let adc = AdcModel::ideal(1.0, 1.0);
        let mut seen = vec![false; 4096];
        for k in 0..=4095 * 4 {
            seen[adc_read(&adc, k as f64 / (4095.0 * 4.0), 25.0) as usize] = true;
        }
        assert!(seen.iter().all(|s| *s));
    }

    fn default_device() -> Device {
        let cfg = HardwareConfig::default();
        Device::new(&cfg, &[850], &[1e6], &mut rng()).unwrap()
    }

    #[test]
    fn transparent_medium_matches_direct_chain() {
        let dev = Device {
            coupling: 1.0,
            ..default_device()
        };
        let path = OpticalPath {
            absorbance: 0.0,
            coupling: 1.0,
            ambient_mw: 0.0,
            temperature_c: 25.0,
        };
        let reading = dev.measure(0, &path, 0.0, &mut rng(), false).unwrap();
        let p = led_power(&dev.leds[0], 25.0, &mut rng(), false);
        let c = photodiode_currents(&dev.photodiode, 850, p, 25.0, &mut rng(), false).unwrap();
        assert_eq!(reading.code, adc_read(&dev.adcs[0], c.total, 25.0));
    }

    #[test]
    fn opaque_medium_reads_dark_current() {
        let dev = default_device();
        let path = OpticalPath {
            absorbance: 50.0,
            coupling: 0.01,
            ambient_mw: 0.0,
            temperature_c: 25.0,
        };
        let reading = dev.measure(0, &path, 0.0, &mut rng(), false).unwrap();
        let dark = adc_read(&dev.adcs[0], dev.photodiode.dark_current(25.0), 25.0);
        assert_eq!(reading.code, dark);
        assert!(channel_measurement(
            &dev.leds[0],
            &dev.photodiode,
            &dev.adcs[0],
            &OpticalPath { absorbance: -0.1, ..path },
            &mut rng(),
            false
        )
        .is_err());
    }

    #[test]
    fn code_to_intensity_inverts_chain() {
        let dev = default_device();
        let path = OpticalPath {
            absorbance: 1.0,
            coupling: dev.coupling,
            ambient_mw: 0.0,
            temperature_c: 25.0,
        };
        let gain = AdcModel::gain_for_full_scale(3.3, 0.5 * 5.0e-3 * (-1.0f64).exp() * 0.01, 1.5);
        let dev = Device {
            adcs: vec![AdcModel { tia_gain: gain, ..AdcModel::ideal(3.3, 1.0) }],
            ..dev
        };
        let reading = dev.measure(0, &path, 0.0, &mut rng(), false).unwrap();
        let back = dev.code_to_intensity(0, reading.code);
        let lsb = dev.code_to_intensity(0, 1);
        let p = led_power(&dev.leds[0], 25.0, &mut rng(), false) * (-1.0f64).exp();
        assert!((back - p).abs() < lsb, "{back} vs {p}");
    }

    proptest! {
        #[test]
        fn adc_monotone_and_bounded_error(a in 0.0f64..3.3, b in 0.0f64..3.3) {
            let adc = AdcModel::ideal(3.3, 1.0);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(adc_read(&adc, lo, 25.0) <= adc_read(&adc, hi, 25.0));
            let code = adc_read(&adc, a, 25.0) as f64;
            prop_assert!((code * 3.3 / 4095.0 - a).abs() <= 3.3 / 8190.0 + 1e-12);
        }

        #[test]
        fn photodiode_strictly_increasing(p in 0.0f64..10.0, dp in 1e-6f64..1.0) {
            let mut r = rng();
            let lo = photodiode_currents(&pd(), 850, p, 25.0, &mut r, false).unwrap().total;
            let hi = photodiode_currents(&pd(), 850, p + dp, 25.0, &mut r, false).unwrap().total;
            prop_assert!(hi > lo);
        }

        #[test]
        fn led_power_nonnegative(t in -50.0f64..200.0, age in 0.0f64..1e7) {
            let mut r = rng();
            prop_assert!(led_power(&led(age), t, &mut r, true) >= 0.0);
        }

        #[test]
        fn doubling_power_leaves_dark_current(p0 in 0.1f64..10.0, a in 0.0f64..5.0) {
            let path = OpticalPath { absorbance: a, coupling: 0.01, ambient_mw: 0.0, temperature_c: 30.0 };
            let dev = default_device();
            let mut dev2 = dev.clone();
            dev2.leds[0].nominal_power_mw = 2.0 * p0;
            let mut dev1 = dev;
            dev1.leds[0].nominal_power_mw = p0;
            let r1 = dev1.measure(0, &path, 0.0, &mut rng(), false).unwrap();
            let r2 = dev2.measure(0, &path, 0.0, &mut rng(), false).unwrap();
            prop_assert_eq!(r1.currents.dark, r2.currents.dark);
            prop_assert!(r2.currents.signal <= 2.0 * r1.currents.signal * (1.0 + 1e-12));
        }
    }
}

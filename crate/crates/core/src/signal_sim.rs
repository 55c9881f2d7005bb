//! Synthetic potentiometric transients.
//!
//! Each differential channel relaxes exponentially from its baseline toward a
//! log-ratio asymptote `S_i = Σ_a k[i,a]·log10(c_test,a / c_ref,a)` once the
//! array is switched from the reference liquid to the test liquid.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const N_ELECTRODES: usize = 16;
/// Differential channels: every sensing electrode against the common 16th one.
pub const N_CHANNELS: usize = N_ELECTRODES - 1;

/// Static description of a sensor array and its acquisition imperfections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorArraySpec {
    pub n_electrodes: usize,
    pub n_channels: usize,
    /// Analyte names, one per column of `cross_sensitivity`.
    pub analytes: Vec<String>,
    /// `[n_channels][n_analytes]`, mV per decade of concentration ratio.
    pub cross_sensitivity: Vec<Vec<f64>>,
    pub tau_s: Vec<f64>,
    pub baseline_mv: Vec<f64>,
    #[serde(default)]
    pub noise_sigma_mv: f64,
    #[serde(default = "zero_drift")]
    pub drift_mv_per_s: Vec<f64>,
}

fn zero_drift() -> Vec<f64> {
    vec![0.0; N_CHANNELS]
}

impl SensorArraySpec {
    /// Noise- and drift-free array with the given channel sensitivities.
    pub fn new(analytes: Vec<String>, cross_sensitivity: Vec<Vec<f64>>, tau_s: Vec<f64>) -> Result<Self> {
        let spec = SensorArraySpec {
            n_electrodes: N_ELECTRODES,
            n_channels: N_CHANNELS,
            analytes,
            cross_sensitivity,
            tau_s,
            baseline_mv: vec![0.0; N_CHANNELS],
            noise_sigma_mv: 0.0,
            drift_mv_per_s: zero_drift(),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Builds channel sensitivities from per-electrode sensitivities
    /// `[16][n_analytes]`, wiring channel `i` as electrode `i` minus electrode 16.
    pub fn from_electrodes(
        analytes: Vec<String>,
        electrode_sensitivity: &[Vec<f64>],
        tau_s: Vec<f64>,
    ) -> Result<Self> {
        if electrode_sensitivity.len() != N_ELECTRODES {
            return Err(Error::Configuration(format!(
                "expected {N_ELECTRODES} electrode rows, got {}",
                electrode_sensitivity.len()
            )));
        }
        let common = &electrode_sensitivity[N_ELECTRODES - 1];
        let channels = electrode_sensitivity[..N_CHANNELS]
            .iter()
            .map(|e| e.iter().zip(common).map(|(a, b)| a - b).collect())
            .collect();
        Self::new(analytes, channels, tau_s)
    }

    pub fn with_noise(mut self, sigma_mv: f64) -> Self {
        self.noise_sigma_mv = sigma_mv;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_electrodes != N_ELECTRODES || self.n_channels != self.n_electrodes - 1 {
            return Err(Error::Configuration(format!(
                "array must have {N_ELECTRODES} electrodes and {N_CHANNELS} channels, got {} and {}",
                self.n_electrodes, self.n_channels
            )));
        }
        let per_channel = [
            ("cross_sensitivity", self.cross_sensitivity.len()),
            ("tau_s", self.tau_s.len()),
            ("baseline_mv", self.baseline_mv.len()),
            ("drift_mv_per_s", self.drift_mv_per_s.len()),
        ];
        for (name, len) in per_channel {
            if len != N_CHANNELS {
                return Err(Error::Configuration(format!(
                    "{name} has {len} entries, expected {N_CHANNELS}"
                )));
            }
        }
        for (i, row) in self.cross_sensitivity.iter().enumerate() {
            if row.len() != self.analytes.len() {
                return Err(Error::Configuration(format!(
                    "cross_sensitivity row {i} has {} columns for {} analytes",
                    row.len(),
                    self.analytes.len()
                )));
            }
        }
        if let Some(t) = self.tau_s.iter().find(|t| !(**t > 0.0) || !t.is_finite()) {
            return Err(Error::Configuration(format!("tau must be > 0, got {t}")));
        }
        if !(self.noise_sigma_mv >= 0.0) || !self.noise_sigma_mv.is_finite() {
            return Err(Error::Configuration(format!(
                "noise sigma must be >= 0, got {}",
                self.noise_sigma_mv
            )));
        }
        Ok(())
    }

    /// Noiseless asymptotic shift of every channel for a reference→test switch.
    pub fn asymptotes(&self, reference: &LiquidProfile, test: &LiquidProfile) -> Result<Vec<f64>> {
        let log_ratios = self
            .analytes
            .iter()
            .map(|a| Ok(test.log10_concentration(a)? - reference.log10_concentration(a)?))
            .collect::<Result<Vec<f64>>>()?;
        Ok(self
            .cross_sensitivity
            .iter()
            .map(|row| row.iter().zip(&log_ratios).map(|(k, r)| k * r).sum())
            .collect())
    }
}

/// A liquid under test, described by its analyte concentrations and labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiquidProfile {
    pub id: String,
    /// Molar concentrations.
    pub analyte_concentrations: BTreeMap<String, f64>,
    #[serde(default)]
    pub class_labels: BTreeMap<String, String>,
}

impl LiquidProfile {
    pub fn new(id: impl Into<String>) -> Self {
        LiquidProfile {
            id: id.into(),
            analyte_concentrations: BTreeMap::new(),
            class_labels: BTreeMap::new(),
        }
    }

    pub fn with(mut self, analyte: &str, molar: f64) -> Self {
        self.analyte_concentrations.insert(analyte.to_string(), molar);
        self
    }

    pub fn label(mut self, task: &str, label: impl Into<String>) -> Self {
        self.class_labels.insert(task.to_string(), label.into());
        self
    }

    fn log10_concentration(&self, analyte: &str) -> Result<f64> {
        match self.analyte_concentrations.get(analyte) {
            None => Err(Error::Configuration(format!(
                "liquid '{}' does not define analyte '{analyte}'",
                self.id
            ))),
            Some(&c) if !(c > 0.0) || !c.is_finite() => Err(Error::Configuration(format!(
                "liquid '{}' has non-positive concentration {c} for '{analyte}'",
                self.id
            ))),
            Some(c) => Ok(c.log10()),
        }
    }
}

/// One reference→test transition recorded on all differential channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransientRecording {
    pub sample_rate_hz: f64,
    pub transition_index: usize,
    /// `[n_samples × 15]`.
    #[serde(with = "crate::codec::rows")]
    pub voltages_mv: Matrix,
    pub reference_liquid_id: String,
    pub test_liquid_id: String,
}

impl TransientRecording {
    pub fn n_samples(&self) -> usize {
        self.voltages_mv.nrows()
    }

    pub fn channel(&self, ch: usize) -> Vec<f64> {
        self.voltages_mv.column(ch)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz > 0.0) || !self.sample_rate_hz.is_finite() {
            return Err(Error::Recording(format!(
                "sample rate must be > 0, got {}",
                self.sample_rate_hz
            )));
        }
        if self.voltages_mv.ncols() != N_CHANNELS {
            return Err(Error::Recording(format!(
                "expected {N_CHANNELS} channels, got {}",
                self.voltages_mv.ncols()
            )));
        }
        if self.transition_index == 0 || self.transition_index >= self.n_samples() {
            return Err(Error::Recording(format!(
                "transition index {} outside (0, {})",
                self.transition_index,
                self.n_samples()
            )));
        }
        if !self.voltages_mv.is_finite() {
            return Err(Error::Data("recording contains NaN or infinite voltages".into()));
        }
        Ok(())
    }
}

/// Acquisition timing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Acquisition {
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    pub transition_s: f64,
}

impl Default for Acquisition {
    fn default() -> Self {
        Acquisition {
            duration_s: 120.0,
            sample_rate_hz: 10.0,
            transition_s: 10.0,
        }
    }
}

impl Acquisition {
    fn sample_counts(&self) -> Result<(usize, usize)> {
        if !(self.duration_s > 0.0) || !self.duration_s.is_finite() {
            return Err(Error::Argument(format!("duration must be > 0, got {}", self.duration_s)));
        }
        if !(self.sample_rate_hz > 0.0) || !self.sample_rate_hz.is_finite() {
            return Err(Error::Argument(format!(
                "sample rate must be > 0, got {}",
                self.sample_rate_hz
            )));
        }
        let n = (self.duration_s * self.sample_rate_hz).round() as usize;
        let t0 = (self.transition_s * self.sample_rate_hz).round() as usize;
        if t0 == 0 || t0 >= n {
            return Err(Error::Argument(format!(
                "transition at {} s does not fall inside a {} s recording",
                self.transition_s, self.duration_s
            )));
        }
        Ok((n, t0))
    }
}

/// Simulates one transition. Deterministic for a fixed seed.
pub fn simulate_transient(
    array: &SensorArraySpec,
    reference: &LiquidProfile,
    test: &LiquidProfile,
    acquisition: &Acquisition,
    seed: u64,
) -> Result<TransientRecording> {
    array.validate()?;
    let (n, t0) = acquisition.sample_counts()?;
    let shift = array.asymptotes(reference, test)?;
    let fs = acquisition.sample_rate_hz;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, array.noise_sigma_mv)
        .map_err(|e| Error::Configuration(e.to_string()))?;

    let mut v = Matrix::zeros(n, N_CHANNELS);
    for k in 0..n {
        let t = k as f64 / fs;
        let row = v.row_mut(k);
        for ch in 0..N_CHANNELS {
            let mut value = array.baseline_mv[ch] + array.drift_mv_per_s[ch] * t;
            if k >= t0 {
                let dt = (k - t0) as f64 / fs;
                value += shift[ch] * (1.0 - (-dt / array.tau_s[ch]).exp());
            }
            if array.noise_sigma_mv > 0.0 {
                value += noise.sample(&mut rng);
            }
            row[ch] = value;
        }
    }

    Ok(TransientRecording {
        sample_rate_hz: fs,
        transition_index: t0,
        voltages_mv: v,
        reference_liquid_id: reference.id.clone(),
        test_liquid_id: test.id.clone(),
    })
}

/// Runs `repeats` transitions for every non-reference liquid.
///
/// Per-recording seeds are drawn in profile order before any shuffling, so the
/// set of recordings is the same whether or not the order is randomized.
pub fn generate_dataset(
    array: &SensorArraySpec,
    profiles: &[LiquidProfile],
    reference_id: &str,
    repeats: usize,
    randomize_order: bool,
    acquisition: &Acquisition,
    seed: u64,
) -> Result<Vec<TransientRecording>> {
    let reference = profiles
        .iter()
        .find(|p| p.id == reference_id)
        .ok_or_else(|| Error::Argument(format!("unknown reference liquid '{reference_id}'")))?;
    if repeats == 0 {
        return Err(Error::Argument("repeats must be >= 1".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut plan = Vec::new();
    for profile in profiles.iter().filter(|p| p.id != reference_id) {
        for _ in 0..repeats {
            plan.push((profile, rng.random::<u64>()));
        }
    }
    if randomize_order {
        plan.shuffle(&mut rng);
    }

    plan.into_iter()
        .map(|(test, s)| simulate_transient(array, reference, test, acquisition, s))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_analyte_array(k: f64, tau: f64) -> SensorArraySpec {
        let mut sens = vec![vec![0.0]; N_CHANNELS];
        sens[0][0] = k;
        SensorArraySpec::new(vec!["acid".into()], sens, vec![tau; N_CHANNELS]).unwrap()
    }

    #[test]
    fn identical_liquids_give_flat_baseline() {
        let mut array = one_analyte_array(2.5, 5.0);
        array.baseline_mv = (0..N_CHANNELS).map(|i| i as f64).collect();
        let liquid = LiquidProfile::new("ref").with("acid", 1e-3);
        let rec = simulate_transient(&array, &liquid, &liquid, &Acquisition::default(), 1).unwrap();
        for k in 0..rec.n_samples() {
            for ch in 0..N_CHANNELS {
                assert_eq!(rec.voltages_mv[(k, ch)], ch as f64);
            }
        }
    }

    #[test]
    fn asymptote_is_sensitivity_times_decades() {
        let array = one_analyte_array(2.5, 5.0);
        let reference = LiquidProfile::new("ref").with("acid", 1e-3);
        let test = LiquidProfile::new("test").with("acid", 1e-1);
        let s = array.asymptotes(&reference, &test).unwrap();
        assert!((s[0] - 5.0).abs() < 1e-12);
        let rec = simulate_transient(&array, &reference, &test, &Acquisition::default(), 0).unwrap();
        let last = rec.voltages_mv[(rec.n_samples() - 1, 0)];
        assert!((last - 5.0).abs() < 1e-6);
    }

    #[test]
    fn reaches_one_percent_of_asymptote_after_five_tau() {
        let tau = 4.0;
        let array = one_analyte_array(3.0, tau);
        let reference = LiquidProfile::new("ref").with("acid", 1e-4);
        let test = LiquidProfile::new("test").with("acid", 1e-2);
        let acq = Acquisition::default();
        let rec = simulate_transient(&array, &reference, &test, &acq, 0).unwrap();
        let idx = rec.transition_index + (5.0 * tau * acq.sample_rate_hz) as usize;
        let s = 6.0;
        assert!((rec.voltages_mv[(idx, 0)] - s).abs() <= 0.01 * s);
    }

    #[test]
    fn only_concentration_ratio_matters() {
        let array = one_analyte_array(2.0, 3.0);
        let a = simulate_transient(
            &array,
            &LiquidProfile::new("r").with("acid", 1e-3),
            &LiquidProfile::new("t").with("acid", 1e-2),
            &Acquisition::default(),
            5,
        )
        .unwrap();
        let b = simulate_transient(
            &array,
            &LiquidProfile::new("r").with("acid", 2e-3),
            &LiquidProfile::new("t").with("acid", 2e-2),
            &Acquisition::default(),
            5,
        )
        .unwrap();
        for (x, y) in a.voltages_mv.as_slice().iter().zip(b.voltages_mv.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let array = one_analyte_array(2.0, 3.0).with_noise(0.3);
        let r = LiquidProfile::new("r").with("acid", 1e-3);
        let t = LiquidProfile::new("t").with("acid", 1e-4);
        let a = simulate_transient(&array, &r, &t, &Acquisition::default(), 42).unwrap();
        let b = simulate_transient(&array, &r, &t, &Acquisition::default(), 42).unwrap();
        assert_eq!(a, b);
        let c = simulate_transient(&array, &r, &t, &Acquisition::default(), 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn noise_sigma_is_recovered() {
        let array = one_analyte_array(0.0, 1.0).with_noise(0.8);
        let liquid = LiquidProfile::new("r").with("acid", 1e-3);
        let acq = Acquisition {
            duration_s: 1100.0,
            sample_rate_hz: 10.0,
            transition_s: 1000.0,
        };
        let rec = simulate_transient(&array, &liquid, &liquid, &acq, 9).unwrap();
        let pre: Vec<f64> = rec.channel(3)[..rec.transition_index].to_vec();
        assert_eq!(pre.len(), 10_000);
        let mean = pre.iter().sum::<f64>() / pre.len() as f64;
        let var = pre.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (pre.len() - 1) as f64;
        assert!((var.sqrt() - 0.8).abs() < 0.08);
    }

    #[test]
    fn missing_analyte_is_configuration_error() {
        let array = one_analyte_array(1.0, 1.0);
        let r = LiquidProfile::new("r").with("acid", 1e-3);
        let t = LiquidProfile::new("t").with("salt", 1e-3);
        let err = simulate_transient(&array, &r, &t, &Acquisition::default(), 0).unwrap_err();
        assert!(matches!(err, Error::Configuration(_)));
    }

    #[test]
    fn non_positive_duration_is_argument_error() {
        let array = one_analyte_array(1.0, 1.0);
        let r = LiquidProfile::new("r").with("acid", 1e-3);
        let acq = Acquisition {
            duration_s: 0.0,
            ..Acquisition::default()
        };
        assert!(matches!(
            simulate_transient(&array, &r, &r, &acq, 0),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn electrode_wiring_is_difference_to_common() {
        let mut electrodes = vec![vec![1.0]; N_ELECTRODES];
        electrodes[2][0] = 4.0;
        electrodes[N_ELECTRODES - 1][0] = 0.5;
        let array =
            SensorArraySpec::from_electrodes(vec!["a".into()], &electrodes, vec![1.0; N_CHANNELS]).unwrap();
        assert_eq!(array.cross_sensitivity[0][0], 0.5);
        assert_eq!(array.cross_sensitivity[2][0], 3.5);
    }

    fn nine_profiles() -> Vec<LiquidProfile> {
        (0..9)
            .map(|i| LiquidProfile::new(format!("L{i}")).with("acid", 10f64.powi(-(i as i32) - 1)))
            .collect()
    }

    #[test]
    fn dataset_has_repeats_per_test_liquid() {
        let array = one_analyte_array(1.0, 1.0);
        let recs =
            generate_dataset(&array, &nine_profiles(), "L0", 5, true, &Acquisition::default(), 3).unwrap();
        assert_eq!(recs.len(), 40);
        assert!(recs.iter().all(|r| r.reference_liquid_id == "L0" && r.test_liquid_id != "L0"));
    }

    #[test]
    fn unshuffled_dataset_follows_profile_order() {
        let array = one_analyte_array(1.0, 1.0);
        let recs =
            generate_dataset(&array, &nine_profiles(), "L0", 1, false, &Acquisition::default(), 3).unwrap();
        let ids: Vec<_> = recs.iter().map(|r| r.test_liquid_id.as_str()).collect();
        assert_eq!(ids, ["L1", "L2", "L3", "L4", "L5", "L6", "L7", "L8"]);
    }

    #[test]
    fn shuffled_datasets_share_liquid_multiset() {
        let array = one_analyte_array(1.0, 1.0);
        let ids = |seed| {
            let mut v: Vec<String> =
                generate_dataset(&array, &nine_profiles(), "L0", 3, true, &Acquisition::default(), seed)
                    .unwrap()
                    .into_iter()
                    .map(|r| r.test_liquid_id)
                    .collect();
            v.sort();
            v
        };
        assert_eq!(ids(1), ids(2));
    }

    #[test]
    fn unknown_reference_rejected() {
        let array = one_analyte_array(1.0, 1.0);
        let err = generate_dataset(&array, &nine_profiles(), "nope", 1, false, &Acquisition::default(), 0);
        assert!(matches!(err, Err(Error::Argument(_))));
    }
}

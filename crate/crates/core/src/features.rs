//! The 75-element transient feature vector: five descriptors for each of the
//! fifteen differential channels, stored channel-major.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal_sim::{TransientRecording, N_CHANNELS};

pub const FEATURES_PER_CHANNEL: usize = 5;
pub const N_FEATURES: usize = N_CHANNELS * FEATURES_PER_CHANNEL;

/// Identifier stored in model bundles for this feature definition set.
pub const FEATURE_SPEC_ID: &str = "etongue.transient5.v1";

pub const MIN_PRE_SAMPLES: usize = 20;
pub const MIN_POST_SAMPLES: usize = 50;

/// |ΔV_ss| below this (mV) means "no shift" and t63 is reported as 0.
pub const T63_EPSILON_MV: f64 = 1e-6;

/// Per-channel descriptor, in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    /// Steady-state shift ΔV_ss, mV.
    SteadyStateShift = 0,
    /// Least-squares slope over the first 10% of the response, mV/s.
    InitialSlope = 1,
    /// Trapezoidal area under V − V_baseline, mV·s.
    Area = 2,
    /// Time to reach 63.2% of ΔV_ss, s.
    T63 = 3,
    /// Peak absolute deviation from baseline, mV.
    Peak = 4,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; FEATURES_PER_CHANNEL] = [
        FeatureKind::SteadyStateShift,
        FeatureKind::InitialSlope,
        FeatureKind::Area,
        FeatureKind::T63,
        FeatureKind::Peak,
    ];

    pub fn unit(self) -> &'static str {
        match self {
            FeatureKind::SteadyStateShift | FeatureKind::Peak => "mV",
            FeatureKind::InitialSlope => "mV/s",
            FeatureKind::Area => "mV·s",
            FeatureKind::T63 => "s",
        }
    }
}

/// Flat index of feature `kind` on zero-based channel `channel`.
#[inline]
pub fn feature_index(channel: usize, kind: FeatureKind) -> usize {
    channel * FEATURES_PER_CHANNEL + kind as usize
}

/// Stable column name, `chNN.fK` with a one-based channel number.
pub fn feature_name(index: usize) -> Result<String> {
    if index >= N_FEATURES {
        return Err(Error::Argument(format!(
            "feature index {index} out of range 0..{N_FEATURES}"
        )));
    }
    Ok(format!(
        "ch{:02}.f{}",
        index / FEATURES_PER_CHANNEL + 1,
        index % FEATURES_PER_CHANNEL
    ))
}

/// Inverse of [`feature_name`].
pub fn feature_index_from_name(name: &str) -> Result<usize> {
    let bad = || Error::Argument(format!("'{name}' is not a feature name"));
    let rest = name.strip_prefix("ch").ok_or_else(bad)?;
    let (ch, f) = rest.split_once(".f").ok_or_else(bad)?;
    if ch.len() != 2 || f.len() != 1 {
        return Err(bad());
    }
    let ch: usize = ch.parse().map_err(|_| bad())?;
    let f: usize = f.parse().map_err(|_| bad())?;
    if ch == 0 || ch > N_CHANNELS || f >= FEATURES_PER_CHANNEL {
        return Err(bad());
    }
    Ok((ch - 1) * FEATURES_PER_CHANNEL + f)
}

pub fn feature_names() -> Vec<String> {
    (0..N_FEATURES).map(|i| feature_name(i).expect("in range")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub reference_liquid_id: String,
    pub test_liquid_id: String,
}

impl FeatureVector {
    pub fn get(&self, channel: usize, kind: FeatureKind) -> f64 {
        self.values[feature_index(channel, kind)]
    }
}

/// Extracts all 75 features from one recording.
pub fn extract_features(rec: &TransientRecording) -> Result<FeatureVector> {
    rec.validate()?;
    let n_pre = rec.transition_index;
    let n_post = rec.n_samples() - rec.transition_index;
    if n_pre < MIN_PRE_SAMPLES || n_post < MIN_POST_SAMPLES {
        return Err(Error::Recording(format!(
            "need >= {MIN_PRE_SAMPLES} samples before and >= {MIN_POST_SAMPLES} after the transition, got {n_pre} and {n_post}"
        )));
    }

    let mut values = Vec::with_capacity(N_FEATURES);
    for ch in 0..N_CHANNELS {
        let signal = rec.channel(ch);
        values.extend_from_slice(&channel_features(&signal, rec.transition_index, rec.sample_rate_hz));
    }
    debug_assert!(values.iter().all(|v| v.is_finite()));

    Ok(FeatureVector {
        values,
        reference_liquid_id: rec.reference_liquid_id.clone(),
        test_liquid_id: rec.test_liquid_id.clone(),
    })
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn channel_features(signal: &[f64], t0: usize, fs: f64) -> [f64; FEATURES_PER_CHANNEL] {
    let dt = 1.0 / fs;

    // skip the first 5% of the pre-transition window (switch-on artifacts)
    let skip = t0 / 20;
    let baseline = mean(&signal[skip..t0]);

    let post: Vec<f64> = signal[t0..].iter().map(|v| v - baseline).collect();
    let n_post = post.len();
    let tenth = n_post.div_ceil(10).max(2);

    let shift = mean(&post[n_post - tenth..]);

    let initial_slope = {
        let ys = &post[..tenth];
        let t_mean = (tenth - 1) as f64 * dt / 2.0;
        let y_mean = mean(ys);
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for (i, y) in ys.iter().enumerate() {
            let t = i as f64 * dt - t_mean;
            sxy += t * (y - y_mean);
            sxx += t * t;
        }
        sxy / sxx
    };

    let area = post.windows(2).map(|w| 0.5 * (w[0] + w[1]) * dt).sum::<f64>();

    let t63 = if shift.abs() < T63_EPSILON_MV {
        0.0
    } else {
        let level = 0.632 * shift.abs();
        let idx = post.iter().position(|v| v.abs() >= level).unwrap_or(n_post - 1);
        idx as f64 * dt
    };

    let peak = post.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    [shift, initial_slope, area, t63, peak]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    fn recording(fs: f64, t0: usize, n: usize, f: impl Fn(usize, f64) -> f64) -> TransientRecording {
        let mut v = Matrix::zeros(n, N_CHANNELS);
        for k in 0..n {
            for ch in 0..N_CHANNELS {
                v[(k, ch)] = f(ch, k as f64 / fs);
            }
        }
        TransientRecording {
            sample_rate_hz: fs,
            transition_index: t0,
            voltages_mv: v,
            reference_liquid_id: "ref".into(),
            test_liquid_id: "test".into(),
        }
    }

    #[test]
    fn names() {
        assert_eq!(feature_name(0).unwrap(), "ch01.f0");
        assert_eq!(feature_name(74).unwrap(), "ch15.f4");
        assert_eq!(feature_name(7).unwrap(), "ch02.f2");
        assert!(matches!(feature_name(75), Err(Error::Argument(_))));
    }

    #[test]
    fn names_are_bijective() {
        let names = feature_names();
        let unique: std::collections::BTreeSet<_> = names.iter().collect();
        assert_eq!(unique.len(), N_FEATURES);
        for (i, n) in names.iter().enumerate() {
            assert_eq!(feature_index_from_name(n).unwrap(), i);
        }
        assert!(feature_index_from_name("ch16.f0").is_err());
        assert!(feature_index_from_name("ch01.f5").is_err());
    }

    #[test]
    fn flat_recording_gives_zero_features() {
        let rec = recording(10.0, 100, 1200, |ch, _| ch as f64 * 3.0 - 7.0);
        let f = extract_features(&rec).unwrap();
        assert_eq!(f.values.len(), N_FEATURES);
        assert!(f.values.iter().all(|v| *v == 0.0), "{:?}", f.values);
    }

    #[test]
    fn too_few_samples_is_recording_error() {
        let rec = recording(10.0, 10, 100, |_, _| 0.0);
        assert!(matches!(extract_features(&rec), Err(Error::Recording(_))));
        let rec = recording(10.0, 100, 140, |_, _| 0.0);
        assert!(matches!(extract_features(&rec), Err(Error::Recording(_))));
    }

    #[test]
    fn nan_is_data_error() {
        let mut rec = recording(10.0, 100, 400, |_, _| 0.0);
        rec.voltages_mv[(200, 4)] = f64::NAN;
        assert!(matches!(extract_features(&rec), Err(Error::Data(_))));
    }

    #[test]
    fn offset_does_not_change_features() {
        let shape = |ch: usize, t: f64| {
            if t < 10.0 {
                0.0
            } else {
                (ch as f64 - 6.0) * (1.0 - (-(t - 10.0) / 7.0).exp())
            }
        };
        let a = extract_features(&recording(10.0, 100, 1200, shape)).unwrap();
        let b = extract_features(&recording(10.0, 100, 1200, |ch, t| shape(ch, t) + 42.5)).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
    }
}

//! Angle unwrapping and gap/outlier repair.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::{AngleUnit, Channel};
use crate::num::{median, Real};

/// Length of the sliding window used by the outlier detector, seconds.
pub const OUTLIER_WINDOW_S: f64 = 5.0;
/// Consistency constant turning a MAD into a Gaussian standard deviation.
pub const MAD_SCALE: f64 = 1.4826;
/// Cap on detect-and-fill rounds.
const MAX_PASSES: usize = 64;

/// Unwraps an angle channel into a continuous trajectory in radians.
///
/// Degrees are detected from the unit string. Output differs from the
/// (radian) input only by integer multiples of 2π; missing samples stay
/// missing and are skipped when computing increments.
pub fn unwrap_angles<T: Real>(channel: &Channel<T>) -> Result<Channel<T>> {
    if !channel.kind.is_angle() {
        return Err(Error::NotAngle {
            id: channel.id.clone(),
            kind: channel.kind.to_string(),
        });
    }
    let unit = AngleUnit::parse(&channel.unit)?;
    let to_rad = match unit {
        AngleUnit::Degrees => T::lit(PI / 180.0),
        AngleUnit::Radians => T::one(),
    };
    let two_pi = T::lit(2.0 * PI);

    let mut out = Vec::with_capacity(channel.len());
    let mut prev: Option<T> = None;
    let mut turns: i64 = 0;
    for &raw in &channel.samples {
        if raw.is_nan() {
            out.push(raw);
            continue;
        }
        let x = raw * to_rad;
        if let Some(p) = prev {
            let d = x - p;
            let k = crate::num::round_to_i64(d / two_pi).unwrap_or(0);
            turns -= k;
        }
        prev = Some(x);
        out.push(x + two_pi * T::lit(turns as f64));
    }
    Ok(Channel {
        id: channel.id.clone(),
        kind: channel.kind,
        unit: "rad".into(),
        samples: out,
    })
}

/// Counts of samples touched by [`repair_gaps_and_outliers`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RepairReport {
    pub missing: usize,
    pub outliers: usize,
}

/// Replaces missing samples and outliers by linear interpolation between the
/// nearest valid neighbours (nearest value at the record edges).
///
/// A sample is an outlier when it sits more than `outlier_k` robust
/// deviations (MAD × 1.4826 over a centred 5 s window of valid samples) away
/// from the window median.
pub fn repair_gaps_and_outliers<T: Real>(
    channel: &Channel<T>,
    outlier_k: T,
    fs: T,
) -> Result<Channel<T>> {
    repair_with_report(channel, outlier_k, fs).map(|(c, _)| c)
}

pub fn repair_with_report<T: Real>(
    channel: &Channel<T>,
    outlier_k: T,
    fs: T,
) -> Result<(Channel<T>, RepairReport)> {
    if !(outlier_k > T::zero()) {
        return Err(Error::InvalidParameter(format!("outlier_k {outlier_k} must be > 0")));
    }
    let x = &channel.samples;
    let n = x.len();
    let missing = x.iter().filter(|v| v.is_nan()).count();
    if missing == n {
        return Err(Error::UnrecoverableChannel(channel.id.clone()));
    }

    let half = num_traits::ToPrimitive::to_usize(&(T::lit(OUTLIER_WINDOW_S / 2.0) * fs).round())
        .unwrap_or(1)
        .max(1);
    let scale = T::lit(MAD_SCALE);

    // Filling a gap or a spike changes its neighbours' deviation scale, so
    // detection repeats on the filled signal until a pass leaves it unchanged.
    let mut out = x.clone();
    let mut valid: Vec<bool> = x.iter().map(|v| !v.is_nan()).collect();
    let mut touched = vec![false; n];
    let mut window = Vec::with_capacity(2 * half + 1);
    let mut deviations = Vec::with_capacity(2 * half + 1);
    for pass in 0..MAX_PASSES {
        let mut flagged = Vec::new();
        for i in 0..n {
            if !valid[i] {
                continue;
            }
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            window.clear();
            window.extend((lo..=hi).filter(|&j| valid[j]).map(|j| out[j]));
            let med = median(&window).expect("window contains sample i");
            deviations.clear();
            deviations.extend(window.iter().map(|&v| (v - med).abs()));
            let mad = median(&deviations).expect("non-empty") * scale;
            if (out[i] - med).abs() > outlier_k * mad {
                flagged.push(i);
            }
        }
        for &i in &flagged {
            valid[i] = false;
            touched[i] = true;
        }
        let before = (pass > 0).then(|| out.clone());
        fill_invalid(&mut out, &valid);
        valid.iter_mut().for_each(|v| *v = true);
        let clean_input = pass == 0 && missing == 0 && flagged.is_empty();
        if clean_input || before.as_ref() == Some(&out) {
            break;
        }
    }

    Ok((
        Channel {
            id: channel.id.clone(),
            kind: channel.kind,
            unit: channel.unit.clone(),
            samples: out,
        },
        RepairReport {
            missing,
            outliers: touched.iter().filter(|&&t| t).count(),
        },
    ))
}

/// Linear interpolation across invalid runs; edge runs take the nearest valid value.
fn fill_invalid<T: Real>(x: &mut [T], valid: &[bool]) {
    let n = x.len();
    let mut i = 0;
    let mut last_valid: Option<usize> = None;
    while i < n {
        if valid[i] {
            last_valid = Some(i);
            i += 1;
            continue;
        }
        let start = i;
        while i < n && !valid[i] {
            i += 1;
        }
        let next_valid = if i < n { Some(i) } else { None };
        match (last_valid, next_valid) {
            (Some(a), Some(b)) => {
                let (xa, xb) = (x[a], x[b]);
                let span = T::of_usize(b - a);
                for j in start..b {
                    let w = T::of_usize(j - a) / span;
                    x[j] = xa + (xb - xa) * w;
                }
            }
            (Some(a), None) => {
                let xa = x[a];
                x[start..].iter_mut().for_each(|v| *v = xa);
            }
            (None, Some(b)) => {
                let xb = x[b];
                x[start..b].iter_mut().for_each(|v| *v = xb);
            }
            (None, None) => unreachable!("channel has at least one valid sample"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ChannelKind;

    fn angle(unit: &str, xs: Vec<f64>) -> Channel<f64> {
        Channel::new("a", ChannelKind::VoltageAngle, unit, xs)
    }

    #[test]
    fn single_wrap_crossing_in_degrees() {
        let out = unwrap_angles(&angle("deg", vec![179.0, -179.0])).unwrap();
        let deg: Vec<f64> = out.samples.iter().map(|r| r.to_degrees()).collect();
        assert!((deg[0] - 179.0).abs() < 1e-12);
        assert!((deg[1] - 181.0).abs() < 1e-12);
        assert_eq!(out.unit, "rad");
    }

    #[test]
    fn continuous_ramp_is_unchanged() {
        let xs: Vec<f64> = (0..50).map(|i| -1.0 + 0.05 * i as f64).collect();
        let out = unwrap_angles(&angle("rad", xs.clone())).unwrap();
        assert_eq!(out.samples, xs);
    }

    #[test]
    fn sawtooth_three_wraps_becomes_monotone_and_rewraps() {
        // ramp covering a little over three full turns, wrapped into (-pi, pi]
        let ramp: Vec<f64> = (0..400).map(|i| -3.0 + 0.05 * i as f64).collect();
        let wrap = |v: f64| {
            let w = (v + PI).rem_euclid(2.0 * PI) - PI;
            if w == -PI { PI } else { w }
        };
        let wrapped: Vec<f64> = ramp.iter().map(|&v| wrap(v)).collect();
        let crossings = wrapped.windows(2).filter(|w| w[1] < w[0]).count();
        assert_eq!(crossings, 3);
        let out = unwrap_angles(&angle("rad", wrapped.clone())).unwrap();
        assert!(out.samples.windows(2).all(|w| w[1] > w[0]));
        for (u, w) in out.samples.iter().zip(&wrapped) {
            assert!((wrap(*u) - w).abs() < 1e-12);
        }
    }

    #[test]
    fn unwrap_rejects_non_angle_channels() {
        let c = Channel::new("p", ChannelKind::ActivePower, "pu", vec![0.0_f64, 1.0]);
        assert!(matches!(unwrap_angles(&c), Err(Error::NotAngle { .. })));
    }

    #[test]
    fn unwrap_skips_missing_samples() {
        let out = unwrap_angles(&angle("deg", vec![170.0, f64::NAN, -170.0])).unwrap();
        assert!(out.samples[1].is_nan());
        assert!((out.samples[2].to_degrees() - 190.0).abs() < 1e-9);
    }

    #[test]
    fn interior_gap_is_linearly_interpolated() {
        let c = Channel::new("p", ChannelKind::ActivePower, "pu", vec![1.0, f64::NAN, 3.0]);
        let out = repair_gaps_and_outliers(&c, 8.0, 30.0).unwrap();
        assert_eq!(out.samples, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn edge_gaps_take_nearest_value() {
        let c = Channel::new("p", ChannelKind::ActivePower, "pu", vec![f64::NAN, 2.0, 4.0, f64::NAN]);
        let out = repair_gaps_and_outliers(&c, 8.0, 30.0).unwrap();
        assert_eq!(out.samples, vec![2.0, 2.0, 4.0, 4.0]);
    }

    #[test]
    fn spike_on_constant_channel_is_replaced() {
        let mut xs = vec![0.7_f64; 600];
        xs[300] = 70.0;
        let c = Channel::new("q", ChannelKind::ReactivePower, "pu", xs);
        let (out, rep) = repair_with_report(&c, 8.0, 30.0).unwrap();
        assert_eq!(rep.outliers, 1);
        assert!(out.samples.iter().all(|&v| v == 0.7));
    }

    #[test]
    fn clean_sinusoid_has_no_false_repairs() {
        let xs: Vec<f64> = (0..3000)
            .map(|m| (2.0 * PI * 0.7 * m as f64 / 30.0).sin() + 0.2 * (2.0 * PI * 0.05 * m as f64 / 30.0).cos())
            .collect();
        let c = Channel::new("p", ChannelKind::ActivePower, "pu", xs.clone());
        let (out, rep) = repair_with_report(&c, 8.0, 30.0).unwrap();
        assert_eq!(rep, RepairReport { missing: 0, outliers: 0 });
        assert_eq!(out.samples, xs);
    }

    #[test]
    fn all_missing_is_unrecoverable() {
        let c = Channel::new("v", ChannelKind::VoltageMag, "pu", vec![f64::NAN; 5]);
        assert!(matches!(
            repair_gaps_and_outliers(&c, 8.0, 30.0),
            Err(Error::UnrecoverableChannel(_))
        ));
    }
}

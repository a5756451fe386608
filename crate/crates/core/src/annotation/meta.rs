use crate::error::{Error, Result};
use crate::scene::map::LaneKind;
use crate::scene::sim::WorldState;

use super::{AnnotationConfig, Lateral, Longitudinal, MetaAction};

/// Exponential smoothing: `y[0] = x[0]`, `y[k] = alpha x[k] + (1 - alpha) y[k-1]`.
pub fn low_pass(signal: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    let (&first, rest) = signal.split_first().ok_or(Error::Empty("signal"))?;
    let mut out = Vec::with_capacity(signal.len());
    out.push(first);
    let mut y = first;
    for &x in rest {
        y = alpha * x + (1.0 - alpha) * y;
        out.push(y);
    }
    Ok(out)
}

/// Longitudinal label from the accelerations over a window and the speed at
/// its end.
pub fn classify_longitudinal(accels: &[f64], end_speed: f64, cfg: &AnnotationConfig) -> Result<Longitudinal> {
    let smooth = low_pass(accels, cfg.alpha)?;
    let mean = smooth.iter().sum::<f64>() / smooth.len() as f64;
    Ok(if mean > cfg.accel_threshold {
        Longitudinal::Accelerate
    } else if mean < cfg.emergency_threshold {
        Longitudinal::EmergencyBrake
    } else if mean < -cfg.accel_threshold {
        Longitudinal::Decelerate
    } else if end_speed < cfg.stop_speed {
        Longitudinal::Stop
    } else {
        Longitudinal::Keep
    })
}

/// Lateral label from signed offsets (left positive) to the starting lane
/// and, when the window enters a junction, that connector's heading change.
pub fn classify_lateral(offsets: &[f64], junction_heading_change: Option<f64>, cfg: &AnnotationConfig) -> Lateral {
    if let Some(dh) = junction_heading_change {
        let turn = cfg.turn_angle_deg.to_radians();
        return if dh > turn {
            Lateral::TurnLeft
        } else if dh < -turn {
            Lateral::TurnRight
        } else {
            Lateral::Straight
        };
    }
    let (Some(first), Some(last)) = (offsets.first(), offsets.last()) else { return Lateral::LaneFollow };
    let shift = last - first;
    if shift >= cfg.lane_change_offset {
        Lateral::LaneChangeLeft
    } else if shift <= -cfg.lane_change_offset {
        Lateral::LaneChangeRight
    } else {
        Lateral::LaneFollow
    }
}

/// Meta action for the expert segment `states[0..=window]`.
pub fn derive_meta_actions(states: &[WorldState], cfg: &AnnotationConfig) -> Result<MetaAction> {
    let w = cfg.window_ticks;
    if w == 0 || states.len() < w + 1 {
        return Err(Error::Empty("meta-action window"));
    }
    let seg = &states[..=w];
    let accels: Vec<f64> = seg[1..].iter().map(|s| s.ego.accel).collect();
    let longitudinal = classify_longitudinal(&accels, seg[w].ego.speed, cfg)?;

    let first = &seg[0];
    let map = &first.map;
    let start_lane = map
        .locate(first.ego.position, first.ego.heading)
        .map(|l| l.0)
        .unwrap_or_else(|| first.route.lane_at(first.route_progress));
    let mut junction = None;
    for st in seg {
        let s = crate::scene::expert::ego_s(st);
        if let Some(l) = map.lane(st.route.lane_at(s)) {
            if l.kind == LaneKind::Junction {
                junction = Some(l.heading_change());
                break;
            }
        }
    }
    let offsets: Vec<f64> = match map.lane(start_lane) {
        Some(l) => seg.iter().map(|st| l.centerline.project(st.ego.position).lateral).collect(),
        None => Vec::new(),
    };
    let lateral = classify_lateral(&offsets, junction, cfg);
    Ok(MetaAction { lateral, longitudinal })
}

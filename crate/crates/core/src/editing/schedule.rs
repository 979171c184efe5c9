use serde::{Deserialize, Serialize};

use crate::error::{NvfError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleShape {
    Linear,
    /// Half-cosine ease-in/ease-out between the endpoints.
    CosineRamp,
}

impl std::str::FromStr for ScheduleShape {
    type Err = NvfError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(ScheduleShape::Linear),
            "cosine-ramp" => Ok(ScheduleShape::CosineRamp),
            other => Err(NvfError::config("edit.schedule", format!("unknown shape `{other}`"))),
        }
    }
}

/// Progressive edit strength: starts weak so early updates stay close to the
/// fitted field, ends at full strength.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EditSchedule {
    pub s_min: f32,
    pub s_max: f32,
    pub total_iterations: usize,
    pub shape: ScheduleShape,
}

impl EditSchedule {
    pub fn new(s_min: f32, s_max: f32, total_iterations: usize, shape: ScheduleShape) -> Result<Self> {
        let s = EditSchedule { s_min, s_max, total_iterations, shape };
        s.validate()?;
        Ok(s)
    }

    /// Linear ramp from 0.3 to 1.0 over ten sweeps of a `frames`-long video.
    pub fn default_for(frames: usize) -> Self {
        EditSchedule { s_min: 0.3, s_max: 1.0, total_iterations: 10 * frames.max(1), shape: ScheduleShape::Linear }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.s_min) || !(0.0..=1.0).contains(&self.s_max) {
            return Err(NvfError::config("edit.s_min/s_max", "strengths must lie in [0, 1]"));
        }
        if self.s_min > self.s_max {
            return Err(NvfError::config("edit.s_min", "s_min must not exceed s_max"));
        }
        if self.total_iterations == 0 {
            return Err(NvfError::config("edit.iterations", "must be >= 1"));
        }
        Ok(())
    }

    /// Strength at iteration `i`, `0 <= i < total_iterations`.
    pub fn strength(&self, i: usize) -> Result<f32> {
        if i >= self.total_iterations {
            return Err(NvfError::contract(format!(
                "iteration {i} outside schedule of {} iterations",
                self.total_iterations
            )));
        }
        if self.total_iterations == 1 {
            return Ok(self.s_max);
        }
        let u = i as f64 / (self.total_iterations - 1) as f64;
        let ramp = match self.shape {
            ScheduleShape::Linear => u,
            ScheduleShape::CosineRamp => 0.5 - 0.5 * (std::f64::consts::PI * u).cos(),
        };
        let (lo, hi) = (self.s_min as f64, self.s_max as f64);
        Ok(((lo + (hi - lo) * ramp) as f32).clamp(self.s_min, self.s_max))
    }
}

/// Free-function form of [`EditSchedule::strength`].
pub fn strength(schedule: &EditSchedule, i: usize) -> Result<f32> {
    schedule.strength(i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn linear_examples() {
        let s = EditSchedule::new(0.2, 1.0, 5, ScheduleShape::Linear).unwrap();
        assert_eq!(s.strength(0).unwrap(), 0.2);
        assert_eq!(s.strength(4).unwrap(), 1.0);
        assert!((s.strength(2).unwrap() - 0.6).abs() < 1e-7);
        assert!(s.strength(5).is_err());
    }

    #[test]
    fn invalid_schedules() {
        assert!(EditSchedule::new(0.8, 0.2, 5, ScheduleShape::Linear).is_err());
        assert!(EditSchedule::new(0.2, 0.8, 0, ScheduleShape::Linear).is_err());
        assert!(EditSchedule::new(-0.1, 0.8, 3, ScheduleShape::Linear).is_err());
    }

    proptest! {
        #[test]
        fn monotone_with_exact_endpoints(a in 0.0f32..=1.0, b in 0.0f32..=1.0, n in 1usize..400, cos in any::<bool>()) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let shape = if cos { ScheduleShape::CosineRamp } else { ScheduleShape::Linear };
            let s = EditSchedule::new(lo, hi, n, shape).unwrap();
            if n > 1 {
                prop_assert_eq!(s.strength(0).unwrap(), lo);
            }
            prop_assert_eq!(s.strength(n - 1).unwrap(), hi);
            for i in 1..n {
                prop_assert!(s.strength(i).unwrap() >= s.strength(i - 1).unwrap());
            }
        }
    }
}

use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{LineModel, PortMatrix};
use crate::units::db_to_amplitude;
use crate::C64;

/// Statistical description of the four measurement lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LineSpec {
    /// Net through level of an input/output line pair, dB.
    pub through_db: f64,
    /// Deterministic level difference AA − BB, dB.
    pub asymmetry_db: f64,
    /// Peak-to-peak random level jitter per line, dB.
    pub gain_jitter_db: f64,
    /// Mean electrical delay per line, s (each line drawn within ±20 %).
    pub delay_s: f64,
    /// Sinusoidal level ripple amplitude, dB.
    pub ripple_db: f64,
    pub ripple_period_hz: f64,
    /// Upper bound on each line port reflection magnitude.
    pub reflection_max: f64,
    pub isolation_db: f64,
    /// Isolation phase (rad); drawn uniformly when absent.
    pub isolation_phase: Option<f64>,
}

impl Default for LineSpec {
    fn default() -> Self {
        Self {
            through_db: -30.0,
            asymmetry_db: 1.0,
            gain_jitter_db: 0.0,
            delay_s: 20e-9,
            ripple_db: 0.0,
            ripple_period_hz: 50e6,
            reflection_max: 0.0,
            isolation_db: -20.0,
            isolation_phase: None,
        }
    }
}

impl LineSpec {
    /// Largest transmission level any drawn line can reach, dB.
    fn max_line_db(&self) -> f64 {
        0.5 * self.through_db + 0.25 * self.asymmetry_db.abs() + 0.5 * self.gain_jitter_db + self.ripple_db
    }

    /// Unit-gain, delay-free, reflectionless lines without isolation leak.
    pub fn ideal() -> Self {
        Self {
            through_db: 0.0,
            asymmetry_db: 0.0,
            gain_jitter_db: 0.0,
            delay_s: 0.0,
            ripple_db: 0.0,
            ripple_period_hz: 50e6,
            reflection_max: 0.0,
            isolation_db: f64::NEG_INFINITY,
            isolation_phase: Some(0.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=0.2).contains(&self.reflection_max) {
            return Err(Error::invalid("reflection bound must lie in [0, 0.2]"));
        }
        if !(self.isolation_db <= -10.0) {
            return Err(Error::invalid("isolation must be at most -10 dB"));
        }
        if !(self.through_db <= 0.0) || !self.through_db.is_finite() {
            return Err(Error::invalid("through level must be finite and at most 0 dB"));
        }
        if !(self.gain_jitter_db >= 0.0 && self.delay_s >= 0.0 && self.ripple_db >= 0.0) {
            return Err(Error::invalid("jitter, delay and ripple must be non-negative"));
        }
        if self.max_line_db() > 0.0 {
            return Err(Error::invalid(
                "line level plus asymmetry, jitter and ripple exceeds 0 dB",
            ));
        }
        if !(self.ripple_period_hz > 0.0) {
            return Err(Error::invalid("ripple period must be positive"));
        }
        Ok(())
    }
}

/// One drawn line: frequency-dependent transmission, constant reflections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticLine {
    pub level: f64,
    pub phase0: f64,
    pub delay_s: f64,
    pub ripple_db: f64,
    pub ripple_period_hz: f64,
    pub ripple_phase: f64,
    pub r1: C64,
    pub r2: C64,
}

impl SyntheticLine {
    pub fn transmission(&self, f_hz: f64) -> C64 {
        let ripple = db_to_amplitude(self.ripple_db * (TAU * f_hz / self.ripple_period_hz + self.ripple_phase).sin());
        C64::from_polar(self.level * ripple, self.phase0 - TAU * f_hz * self.delay_s)
    }

    pub fn matrix(&self, f_hz: f64) -> PortMatrix {
        let t = self.transmission(f_hz);
        PortMatrix::two_port(self.r1, t, t, self.r2)
    }
}

/// Drawn input/output lines for both waveguides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticLines {
    pub in_a: SyntheticLine,
    pub out_a: SyntheticLine,
    pub in_b: SyntheticLine,
    pub out_b: SyntheticLine,
    pub isolation: C64,
}

impl SyntheticLines {
    /// Line model at frequency `f_hz`.
    pub fn at(&self, f_hz: f64) -> LineModel {
        LineModel {
            s_in_a: self.in_a.matrix(f_hz),
            s_out_a: self.out_a.matrix(f_hz),
            s_in_b: self.in_b.matrix(f_hz),
            s_out_b: self.out_b.matrix(f_hz),
            isolation: self.isolation,
        }
    }
}

/// Draws a line set from `spec`; identical seeds give identical lines.
pub fn gen_lines(spec: &LineSpec, seed: u64) -> Result<SyntheticLines> {
    spec.validate()?;
    let mut rng = super::rng(seed);
    // Each path is an input/output pair, so each line carries half the path level.
    let mut draw = |sign: f64| -> SyntheticLine {
        let jitter = spec.gain_jitter_db * (rng.random::<f64>() - 0.5);
        let db = 0.5 * spec.through_db + sign * 0.25 * spec.asymmetry_db + jitter;
        let delay = spec.delay_s * (1.0 + 0.4 * (rng.random::<f64>() - 0.5));
        let phase0 = TAU * rng.random::<f64>();
        let ripple_phase = TAU * rng.random::<f64>();
        // Keeping |t| + |r| ≤ 1 at every frequency guarantees passivity.
        let r_cap = spec.reflection_max.min(1.0 - db_to_amplitude(db + spec.ripple_db));
        let mut refl = || {
            let m = r_cap * rng.random::<f64>();
            C64::from_polar(m, TAU * rng.random::<f64>())
        };
        let (r1, r2) = (refl(), refl());
        SyntheticLine {
            level: db_to_amplitude(db),
            phase0: if spec.delay_s == 0.0 && spec.through_db == 0.0 {
                0.0
            } else {
                phase0
            },
            delay_s: delay,
            ripple_db: spec.ripple_db,
            ripple_period_hz: spec.ripple_period_hz,
            ripple_phase,
            r1,
            r2,
        }
    };
    let in_a = draw(1.0);
    let out_a = draw(1.0);
    let in_b = draw(-1.0);
    let out_b = draw(-1.0);
    let iso_phase = match spec.isolation_phase {
        Some(p) => p,
        None => TAU * rng.random::<f64>(),
    };
    Ok(SyntheticLines {
        in_a,
        out_a,
        in_b,
        out_b,
        isolation: C64::from_polar(db_to_amplitude(spec.isolation_db), iso_phase),
    })
}

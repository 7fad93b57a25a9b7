//! Time-dependent Rabi-frequency envelopes for the two Raman fields.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::dynamics::{effective_rabi_frequency, FieldSample, LambdaParams};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EnvelopeShape {
    Square,
    /// Linear ramps.
    Trapezoid,
    /// `sin^2` ramps.
    Sin2Ramp,
}

impl EnvelopeShape {
    pub fn name(&self) -> &'static str {
        match self {
            EnvelopeShape::Square => "square",
            EnvelopeShape::Trapezoid => "trapezoid",
            EnvelopeShape::Sin2Ramp => "sin2_ramp",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "square" => Some(EnvelopeShape::Square),
            "trapezoid" | "linear" => Some(EnvelopeShape::Trapezoid),
            "sin2_ramp" | "sin2" => Some(EnvelopeShape::Sin2Ramp),
            _ => None,
        }
    }
}

/// Which part of an envelope a time falls in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Piece {
    Off,
    Rise,
    Flat,
    Fall,
}

/// A single pulse: zero outside `[start, start + width]`, `peak` on the flat
/// top, with leading and trailing ramps of length `rise` and `fall`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Envelope {
    pub shape: EnvelopeShape,
    pub peak: f64,
    pub start: f64,
    pub width: f64,
    pub rise: f64,
    pub fall: f64,
}

impl Envelope {
    pub fn square(peak: f64, start: f64, width: f64) -> Result<Self> {
        Self::new(EnvelopeShape::Square, peak, start, width, 0.0, 0.0)
    }

    pub fn new(shape: EnvelopeShape, peak: f64, start: f64, width: f64, rise: f64, fall: f64) -> Result<Self> {
        let (rise, fall) = match shape {
            EnvelopeShape::Square => (0.0, 0.0),
            _ => (rise, fall),
        };
        if !(peak >= 0.0 && peak.is_finite()) {
            return Err(Error::InvalidGeometry(format!("peak must be finite and >= 0, got {peak}")));
        }
        if !(width >= 0.0 && width.is_finite() && start.is_finite()) {
            return Err(Error::InvalidGeometry(format!("width must be finite and >= 0, got {width}")));
        }
        if !(rise >= 0.0 && fall >= 0.0) {
            return Err(Error::InvalidGeometry("ramp lengths must be >= 0".into()));
        }
        if rise + fall > width * (1.0 + 1e-12) {
            return Err(Error::InvalidGeometry(format!(
                "ramps ({rise} + {fall} us) longer than the pulse ({width} us)"
            )));
        }
        Ok(Self { shape, peak, start, width, rise, fall })
    }

    pub fn end(&self) -> f64 {
        self.start + self.width
    }

    /// Time integral of the envelope.
    pub fn area(&self) -> f64 {
        // Both ramp shapes average to one half of the peak.
        self.peak * (self.width - 0.5 * (self.rise + self.fall))
    }

    fn ramp(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match self.shape {
            EnvelopeShape::Sin2Ramp => (FRAC_PI_2 * u).sin().powi(2),
            _ => u,
        }
    }

    pub(crate) fn piece_at(&self, t: f64) -> Piece {
        if t < self.start || t > self.end() || self.width == 0.0 {
            Piece::Off
        } else if t < self.start + self.rise {
            Piece::Rise
        } else if t > self.end() - self.fall {
            Piece::Fall
        } else {
            Piece::Flat
        }
    }

    /// Evaluates the formula of `piece` at `t`; continuous up to the piece's
    /// boundaries, so it gives one-sided limits there.
    pub(crate) fn eval_piece(&self, piece: Piece, t: f64) -> f64 {
        match piece {
            Piece::Off => 0.0,
            Piece::Flat => self.peak,
            Piece::Rise => self.peak * self.ramp((t - self.start) / self.rise),
            Piece::Fall => self.peak * self.ramp((self.end() - t) / self.fall),
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        self.eval_piece(self.piece_at(t), t)
    }

    pub fn breakpoints(&self) -> [f64; 4] {
        [self.start, self.start + self.rise, self.end() - self.fall, self.end()]
    }
}

/// Envelopes of the two fields over `[0, span]`. Fields vanish outside that
/// window even where an envelope extends past it.
#[derive(Clone, Debug, PartialEq)]
pub struct PulseSequence {
    pub plus_envelopes: Vec<Envelope>,
    pub minus_envelopes: Vec<Envelope>,
    pub span: f64,
}

impl PulseSequence {
    pub fn new(plus_envelopes: Vec<Envelope>, minus_envelopes: Vec<Envelope>, span: f64) -> Result<Self> {
        if !(span >= 0.0 && span.is_finite()) {
            return Err(Error::InvalidGeometry(format!("span must be finite and >= 0, got {span}")));
        }
        for (name, channel) in [("plus", &plus_envelopes), ("minus", &minus_envelopes)] {
            for w in channel.windows(2) {
                if w[1].start < w[0].end() {
                    return Err(Error::InvalidGeometry(format!("overlapping envelopes on the {name} channel")));
                }
            }
            if channel.iter().any(|e| e.end() > span * (1.0 + 1e-12) + 1e-15) {
                return Err(Error::InvalidGeometry(format!("{name} envelope extends past the span")));
            }
        }
        Ok(Self { plus_envelopes, minus_envelopes, span })
    }

    /// No fields at all; useful for free evolution.
    pub fn empty(span: f64) -> Result<Self> {
        Self::new(Vec::new(), Vec::new(), span)
    }

    pub fn sample(&self, t: f64) -> FieldSample {
        if !(0.0..=self.span).contains(&t) {
            return FieldSample::ZERO;
        }
        FieldSample {
            omega_plus: channel_value(&self.plus_envelopes, t),
            omega_minus: channel_value(&self.minus_envelopes, t),
        }
    }

    /// Times inside `(0, span)` where some envelope changes piece. Between
    /// consecutive breakpoints every field is smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .plus_envelopes
            .iter()
            .chain(&self.minus_envelopes)
            .flat_map(|e| e.breakpoints())
            .filter(|&t| t > 0.0 && t < self.span)
            .collect();
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    /// Fields on a window `[a, b]` containing no breakpoint in its interior.
    pub(crate) fn segment(&self, a: f64, b: f64) -> Segment<'_> {
        let mid = 0.5 * (a + b);
        let active = mid >= 0.0 && mid <= self.span;
        let pick = |channel: &'_ [Envelope]| -> Option<(usize, Piece)> {
            if !active {
                return None;
            }
            channel
                .iter()
                .enumerate()
                .map(|(k, e)| (k, e.piece_at(mid)))
                .find(|(_, p)| *p != Piece::Off)
        };
        Segment {
            seq: self,
            plus: pick(&self.plus_envelopes),
            minus: pick(&self.minus_envelopes),
        }
    }

    pub fn max_fields(&self) -> FieldSample {
        let max = |c: &[Envelope]| c.iter().map(|e| e.peak).fold(0.0, f64::max);
        FieldSample::new(max(&self.plus_envelopes), max(&self.minus_envelopes))
    }
}

fn channel_value(channel: &[Envelope], t: f64) -> f64 {
    channel
        .iter()
        .find(|e| e.piece_at(t) != Piece::Off)
        .map_or(0.0, |e| e.value(t))
        .max(0.0)
}

pub(crate) struct Segment<'a> {
    seq: &'a PulseSequence,
    plus: Option<(usize, Piece)>,
    minus: Option<(usize, Piece)>,
}

impl Segment<'_> {
    pub(crate) fn fields(&self, t: f64) -> FieldSample {
        let eval = |sel: Option<(usize, Piece)>, channel: &[Envelope]| {
            sel.map_or(0.0, |(k, p)| channel[k].eval_piece(p, t).max(0.0))
        };
        FieldSample {
            omega_plus: eval(self.plus, &self.seq.plus_envelopes),
            omega_minus: eval(self.minus, &self.seq.minus_envelopes),
        }
    }

    /// The fields if they do not change over the segment.
    pub(crate) fn constant(&self) -> Option<FieldSample> {
        let flat = |sel: Option<(usize, Piece)>| matches!(sel, None | Some((_, Piece::Flat | Piece::Off)));
        (flat(self.plus) && flat(self.minus)).then(|| self.fields(0.0))
    }
}

/// Two simultaneous square pulses of equal peak over `[0, duration]`.
pub fn make_rabi_pair(peak: f64, duration: f64) -> Result<PulseSequence> {
    if !(duration >= 0.0) {
        return Err(Error::InvalidGeometry(format!("duration must be >= 0, got {duration}")));
    }
    if duration == 0.0 {
        return PulseSequence::empty(0.0);
    }
    let env = Envelope::square(peak, 0.0, duration)?;
    PulseSequence::new(vec![env], vec![env], duration)
}

/// Delayed pulse pair. The `omega_plus` pulse occupies `[0, width]` with a
/// sharp leading edge and a trailing ramp of length `t_rise`; the
/// `omega_minus` pulse occupies `[delay - width, delay]` with a leading ramp
/// of length `t_rise` and a sharp trailing edge. `delay` is the time from
/// the rising edge of the first pulse to the falling edge of the second;
/// for `delay < width` the part of the second pulse before zero is cut off.
pub fn make_stirap_pair(
    peak: f64,
    width: f64,
    t_rise: f64,
    delay: f64,
    ramp: EnvelopeShape,
) -> Result<PulseSequence> {
    if !(t_rise >= 0.0 && t_rise <= width) {
        return Err(Error::InvalidGeometry(format!(
            "rise time {t_rise} us must lie in [0, pulse width {width} us]"
        )));
    }
    if !(delay >= 0.0) {
        return Err(Error::InvalidGeometry(format!("delay must be >= 0, got {delay}")));
    }
    let shape = if t_rise == 0.0 { EnvelopeShape::Square } else { ramp };
    let plus = Envelope::new(shape, peak, 0.0, width, 0.0, t_rise)?;
    let minus = Envelope::new(shape, peak, delay - width, width, t_rise, 0.0)?;
    let span = width.max(delay);
    let minus = if minus.end() > 0.0 { vec![minus] } else { Vec::new() };
    PulseSequence::new(vec![plus], minus, span)
}

/// Length of a pi/2 rotation at Raman Rabi frequency `omega_r`.
pub fn half_pi_duration(omega_r: f64) -> f64 {
    FRAC_PI_2 / omega_r
}

/// Equal peak field that gives Raman Rabi frequency `omega_r` at the
/// detuning in `params`.
pub fn peak_for_rabi_frequency(omega_r: f64, params: &LambdaParams) -> Result<f64> {
    if params.delta_avg == 0.0 {
        return Err(Error::DivisionByZero("Raman pulses need a nonzero one-photon detuning"));
    }
    let peak = (2.0 * params.delta_avg.abs() * omega_r).sqrt();
    debug_assert!(
        (effective_rabi_frequency(peak, peak, params.delta_avg.abs()).unwrap() - omega_r).abs()
            <= 1e-9 * omega_r.max(1.0)
    );
    Ok(peak)
}

/// Two Raman pi/2 pulse pairs separated by a field-free gap `tau`.
pub fn make_ramsey_sequence(omega_r_target: f64, params: &LambdaParams, tau: f64) -> Result<PulseSequence> {
    if !(omega_r_target > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "target Rabi frequency must be > 0, got {omega_r_target}"
        )));
    }
    if !(tau >= 0.0) {
        return Err(Error::InvalidGeometry(format!("free evolution time must be >= 0, got {tau}")));
    }
    let peak = peak_for_rabi_frequency(omega_r_target, params)?;
    let t_half = half_pi_duration(omega_r_target);
    let first = Envelope::square(peak, 0.0, t_half)?;
    let second = Envelope::square(peak, t_half + tau, t_half)?;
    PulseSequence::new(vec![first, second], vec![first, second], 2.0 * t_half + tau)
}

/// Pi pulse duration, for documentation and tests.
pub fn pi_duration(omega_r: f64) -> f64 {
    PI / omega_r
}

//! Piecewise-constant, right-continuous controls on a closed interval.

use nalgebra::DVector;

use crate::error::{check_dim, Error, Result};
use crate::system::ControlSet;

/// `u(t) = values[i]` for `t ∈ [s_i, s_{i+1})`, with `s_0 = a` and the last
/// piece closed at `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSignal {
    a: f64,
    b: f64,
    switch_times: Vec<f64>,
    values: Vec<DVector<f64>>,
}

impl ControlSignal {
    pub fn new(a: f64, b: f64, switch_times: Vec<f64>, values: Vec<DVector<f64>>) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && b > a) {
            return Err(Error::InvalidArgument(format!("control interval [{a}, {b}] is empty")));
        }
        if values.len() != switch_times.len() + 1 {
            return Err(Error::InvalidArgument(format!(
                "{} switch times need {} values, got {}",
                switch_times.len(),
                switch_times.len() + 1,
                values.len()
            )));
        }
        let k = values[0].len();
        for v in &values {
            check_dim(k, v.len())?;
            if v.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidArgument("control values must be finite".into()));
            }
        }
        let mut prev = a;
        for &s in &switch_times {
            if !(s > prev && s < b) {
                return Err(Error::InvalidArgument(format!(
                    "switch time {s} must be increasing and inside ({a}, {b})"
                )));
            }
            prev = s;
        }
        Ok(Self {
            a,
            b,
            switch_times,
            values,
        })
    }

    pub fn constant(a: f64, b: f64, value: DVector<f64>) -> Result<Self> {
        Self::new(a, b, Vec::new(), vec![value])
    }

    pub fn start(&self) -> f64 {
        self.a
    }

    pub fn end(&self) -> f64 {
        self.b
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn switch_times(&self) -> &[f64] {
        &self.switch_times
    }

    pub fn values(&self) -> &[DVector<f64>] {
        &self.values
    }

    /// Index of the piece containing `t`, clamped to the ends.
    pub fn piece_index(&self, t: f64) -> usize {
        self.switch_times.partition_point(|&s| s <= t)
    }

    pub fn value_at(&self, t: f64) -> &DVector<f64> {
        &self.values[self.piece_index(t)]
    }

    /// `u(t⁻)`, the value of the piece ending at `t`.
    pub fn value_left(&self, t: f64) -> &DVector<f64> {
        &self.values[self.switch_times.partition_point(|&s| s < t)]
    }

    /// `(start, end, value)` for each piece.
    pub fn pieces(&self) -> Vec<(f64, f64, &DVector<f64>)> {
        let mut bounds = Vec::with_capacity(self.values.len() + 1);
        bounds.push(self.a);
        bounds.extend_from_slice(&self.switch_times);
        bounds.push(self.b);
        self.values
            .iter()
            .enumerate()
            .map(|(i, v)| (bounds[i], bounds[i + 1], v))
            .collect()
    }

    pub fn is_switch_time(&self, t: f64, tol: f64) -> bool {
        self.switch_times.iter().any(|s| (s - t).abs() <= tol)
    }

    pub fn validate(&self, set: &ControlSet, tol: f64) -> Result<()> {
        check_dim(set.dim(), self.dim())?;
        for (lo, _, v) in self.pieces() {
            if !set.contains(v, tol) {
                return Err(Error::InvalidArgument(format!(
                    "control value {:?} on the piece starting at {lo} lies outside U",
                    v.as_slice()
                )));
            }
        }
        Ok(())
    }

    /// Builds a signal from arbitrary breakpoints, merging pieces of zero
    /// length and dropping switches between equal values.
    pub(crate) fn from_breakpoints(a: f64, b: f64, mut pieces: Vec<(f64, DVector<f64>)>) -> Result<Self> {
        pieces.retain(|(s, _)| *s < b);
        let mut times = Vec::new();
        let mut values: Vec<DVector<f64>> = Vec::new();
        for (i, (s, v)) in pieces.iter().enumerate() {
            let next = pieces.get(i + 1).map_or(b, |p| p.0);
            if next <= *s {
                continue;
            }
            if values.is_empty() {
                values.push(v.clone());
            } else if values.last() != Some(v) {
                times.push(s.max(a));
                values.push(v.clone());
            }
        }
        if values.is_empty() {
            return Err(Error::Empty("control signal"));
        }
        Self::new(a, b, times, values)
    }

    /// The signal with `value` on `[lo, hi)` and unchanged elsewhere.
    pub fn with_value_on(&self, lo: f64, hi: f64, value: DVector<f64>) -> Result<Self> {
        check_dim(self.dim(), value.len())?;
        if !(lo >= self.a && hi <= self.b && lo < hi) {
            return Err(Error::NeedleInterval {
                lo,
                hi,
                reason: format!("must satisfy {} <= lo < hi <= {}", self.a, self.b),
            });
        }
        let mut pieces: Vec<(f64, DVector<f64>)> = Vec::new();
        for (s, _, v) in self.pieces() {
            if s < lo {
                pieces.push((s, v.clone()));
            }
        }
        pieces.push((lo, value));
        if hi < self.b {
            pieces.push((hi, self.value_at(hi).clone()));
            for (s, _, v) in self.pieces() {
                if s > hi {
                    pieces.push((s, v.clone()));
                }
            }
        }
        Self::from_breakpoints(self.a, self.b, pieces)
    }

    /// The signal restricted to `[self.start(), b]` or extended to `b` by
    /// continuing the last value.
    pub fn with_end(&self, b: f64) -> Result<Self> {
        let pieces: Vec<(f64, DVector<f64>)> = self
            .pieces()
            .into_iter()
            .map(|(s, _, v)| (s, v.clone()))
            .collect();
        Self::from_breakpoints(self.a, b, pieces)
    }

    /// The signal on a subinterval `[lo, hi]`.
    pub fn restricted(&self, lo: f64, hi: f64) -> Result<Self> {
        if !(lo >= self.a && hi <= self.b) {
            return Err(Error::InvalidArgument(format!(
                "[{lo}, {hi}] is not inside [{}, {}]",
                self.a, self.b
            )));
        }
        let mut pieces = vec![(lo, self.value_at(lo).clone())];
        for (s, _, v) in self.pieces() {
            if s > lo {
                pieces.push((s, v.clone()));
            }
        }
        Self::from_breakpoints(lo, hi, pieces)
    }

    /// The same signal on `[a + dt, b + dt]`.
    pub fn shifted(&self, dt: f64) -> Result<Self> {
        Self::new(
            self.a + dt,
            self.b + dt,
            self.switch_times.iter().map(|s| s + dt).collect(),
            self.values.clone(),
        )
    }

    /// Replaces each value by `map(value)`.
    pub fn map_values<F: Fn(&DVector<f64>) -> DVector<f64>>(&self, map: F) -> Result<Self> {
        Self::new(
            self.a,
            self.b,
            self.switch_times.clone(),
            self.values.iter().map(map).collect(),
        )
    }
}

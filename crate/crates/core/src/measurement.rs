//! Append-only measurement log and sliding observation windows.

use std::io::{Read, Write};

use crate::dynamics::{InputSequence, OutputVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeasurementError {
    #[error("window [{first}, {last}] not covered by log [{log_first}, {log_last:?}]")]
    WindowUnderflow {
        first: i64,
        last: i64,
        log_first: usize,
        log_last: Option<usize>,
    },
    #[error("replay csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("replay csv line {line}: {message}")]
    Format { line: u64, message: String },
}

/// Time-indexed record of measured outputs and inputs at period `tau`.
///
/// Sample `origin + i` is stored at position `i`; outputs and inputs stay
/// aligned.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementLog<const M: usize> {
    outputs: Vec<OutputVector<M>>,
    inputs: Vec<f64>,
    tau: f64,
    origin: usize,
}

/// The `N + 1` most recent samples ending at some index, oldest first.
#[derive(Debug, Clone, Copy)]
pub struct ObservationWindow<'a, const M: usize> {
    pub y: &'a [OutputVector<M>],
    pub u: &'a [f64],
    pub start_index: usize,
    pub tau: f64,
}

impl<'a, const M: usize> ObservationWindow<'a, M> {
    pub fn horizon(&self) -> usize {
        self.y.len() - 1
    }

    pub fn end_index(&self) -> usize {
        self.start_index + self.horizon()
    }

    pub fn inputs(&self) -> InputSequence<'a> {
        InputSequence::new(self.u, self.tau)
    }
}

impl<const M: usize> MeasurementLog<M> {
    pub fn new(tau: f64) -> Self {
        Self::with_origin(tau, 0)
    }

    pub fn with_origin(tau: f64, origin: usize) -> Self {
        Self {
            outputs: Vec::new(),
            inputs: Vec::new(),
            tau,
            origin,
        }
    }

    pub fn push(&mut self, y: OutputVector<M>, u: f64) {
        self.outputs.push(y);
        self.inputs.push(u);
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn origin(&self) -> usize {
        self.origin
    }

    pub fn last_index(&self) -> Option<usize> {
        (!self.is_empty()).then(|| self.origin + self.len() - 1)
    }

    pub fn output(&self, k: usize) -> Option<&OutputVector<M>> {
        k.checked_sub(self.origin).and_then(|i| self.outputs.get(i))
    }

    pub fn input(&self, k: usize) -> Option<f64> {
        k.checked_sub(self.origin).and_then(|i| self.inputs.get(i)).copied()
    }

    pub fn outputs(&self) -> &[OutputVector<M>] {
        &self.outputs
    }

    pub fn inputs_slice(&self) -> &[f64] {
        &self.inputs
    }

    fn underflow(&self, first: i64, last: i64) -> MeasurementError {
        MeasurementError::WindowUnderflow {
            first,
            last,
            log_first: self.origin,
            log_last: self.last_index(),
        }
    }

    /// Samples `k - n ..= k`.
    pub fn extract_window(&self, k: usize, n: usize) -> Result<ObservationWindow<'_, M>, MeasurementError> {
        let first = k as i64 - n as i64;
        if first < self.origin as i64 || self.last_index().is_none_or(|last| k > last) {
            return Err(self.underflow(first, k as i64));
        }
        let lo = k - n - self.origin;
        let hi = k - self.origin + 1;
        Ok(ObservationWindow {
            y: &self.outputs[lo..hi],
            u: &self.inputs[lo..hi],
            start_index: k - n,
            tau: self.tau,
        })
    }

    /// Inputs `from .. to` (exclusive end).
    pub fn input_range(&self, from: usize, to: usize) -> Result<InputSequence<'_>, MeasurementError> {
        if from < self.origin || to < from || to > self.origin + self.len() {
            return Err(self.underflow(from as i64, to as i64 - 1));
        }
        Ok(InputSequence::new(
            &self.inputs[from - self.origin..to - self.origin],
            self.tau,
        ))
    }
}

impl MeasurementLog<1> {
    /// Replay format: header `k,u,y` then one row per sample.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), MeasurementError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["k", "u", "y"])?;
        for (i, (y, u)) in self.outputs.iter().zip(&self.inputs).enumerate() {
            out.write_record(&[(self.origin + i).to_string(), format!("{u:e}"), format!("{:e}", y[0])])?;
        }
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, tau: f64) -> Result<Self, MeasurementError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let mut log: Option<Self> = None;
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let field = |i: usize, name: &str| -> Result<&str, MeasurementError> {
                rec.get(i).ok_or_else(|| MeasurementError::Format {
                    line,
                    message: format!("missing column {name}"),
                })
            };
            let bad = |name: &str, e: &dyn std::fmt::Display| MeasurementError::Format {
                line,
                message: format!("{name}: {e}"),
            };
            let k: usize = field(0, "k")?.parse().map_err(|e| bad("k", &e))?;
            let u: f64 = field(1, "u")?.parse().map_err(|e| bad("u", &e))?;
            let y: f64 = field(2, "y")?.parse().map_err(|e| bad("y", &e))?;
            let log = log.get_or_insert_with(|| Self::with_origin(tau, k));
            if k != log.origin + log.len() {
                return Err(MeasurementError::Format {
                    line,
                    message: format!("expected index {}, found {k}", log.origin + log.len()),
                });
            }
            log.push(OutputVector::<1>::new(y), u);
        }
        Ok(log.unwrap_or_else(|| Self::new(tau)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn y(v: f64) -> OutputVector<1> {
        OutputVector::<1>::new(v)
    }

    fn ramp(n: usize) -> MeasurementLog<1> {
        let mut log = MeasurementLog::new(0.002);
        for i in 0..n {
            log.push(y(i as f64), 10.0 + i as f64);
        }
        log
    }

    #[test]
    fn push_appends_aligned_samples() {
        let mut log = MeasurementLog::<1>::new(0.002);
        assert_eq!(log.last_index(), None);
        log.push(y(1.0), 0.5);
        assert_eq!(log.len(), 1);
        log.push(y(2.0), 0.6);
        assert_eq!(log.output(0).unwrap()[0], 1.0);
        assert_eq!(log.output(1).unwrap()[0], 2.0);
        assert_eq!(log.input(1), Some(0.6));
        assert_eq!(log.last_index(), Some(1));
    }

    #[test]
    fn single_sample_window() {
        let log = ramp(5);
        let w = log.extract_window(4, 0).unwrap();
        assert_eq!(w.y.len(), 1);
        assert_eq!(w.y[0][0], 4.0);
        assert_eq!(w.start_index, 4);
    }

    #[test]
    fn exact_fit_window_is_full_log() {
        let log = ramp(201);
        let w = log.extract_window(200, 200).unwrap();
        assert_eq!(w.y, log.outputs());
        assert_eq!(w.u, log.inputs_slice());
        assert_eq!(w.horizon(), 200);
        assert_eq!(w.end_index(), 200);
    }

    #[test]
    fn consecutive_windows_share_n_samples() {
        let log = ramp(50);
        let a = log.extract_window(30, 10).unwrap();
        let b = log.extract_window(31, 10).unwrap();
        let sa: std::collections::BTreeSet<i64> = a.y.iter().map(|v| v[0] as i64).collect();
        let sb: std::collections::BTreeSet<i64> = b.y.iter().map(|v| v[0] as i64).collect();
        assert_eq!(sa.intersection(&sb).count(), 10);
    }

    #[test]
    fn out_of_range_windows_underflow() {
        let log = ramp(10);
        assert!(matches!(
            log.extract_window(5, 6),
            Err(MeasurementError::WindowUnderflow { .. })
        ));
        assert!(matches!(
            log.extract_window(10, 2),
            Err(MeasurementError::WindowUnderflow { .. })
        ));
        assert!(log.input_range(3, 11).is_err());
        assert_eq!(log.input_range(3, 5).unwrap().samples(), &[13.0, 14.0]);
    }

    #[test]
    fn offset_origin_indexing() {
        let mut log = MeasurementLog::<1>::with_origin(0.002, 100);
        for i in 0..5 {
            log.push(y(i as f64), 0.0);
        }
        assert!(log.extract_window(102, 3).is_err());
        let w = log.extract_window(104, 4).unwrap();
        assert_eq!(w.start_index, 100);
        assert_eq!(w.y[0][0], 0.0);
    }

    #[test]
    fn csv_replay_round_trip() {
        let log = ramp(7);
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("k,u,y\n"));
        let back = MeasurementLog::<1>::read_csv(buf.as_slice(), 0.002).unwrap();
        assert_eq!(back, log);
    }

    #[test]
    fn csv_with_gap_is_rejected() {
        let text = "k,u,y\n0,1,2\n2,1,2\n";
        assert!(matches!(
            MeasurementLog::<1>::read_csv(text.as_bytes(), 0.002),
            Err(MeasurementError::Format { .. })
        ));
    }
}

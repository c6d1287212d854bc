//! Deterministic report emission.
//!
//! Every emitter here is byte-deterministic: a given value always renders to
//! the same bytes, so repeated runs of an experiment diff clean. Floats are
//! written with 17 significant digits in lowercase scientific notation
//! (`1.0000000000000001e-1`), the shortest fixed-width form that
//! round-trips every finite f64; JSON key order is struct declaration
//! order; CSV columns are fixed per emitter.

use std::io;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter, Serializer};
use thiserror::Error;

use crate::admissible::AdmissibleSet;
use crate::simulate::SimSeries;
use crate::solver::ScanRow;
use num_complex::Complex64;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("JSON serialization failed: {0}")]
    Json(#[from] serde_json::Error),
}

/// 17-significant-digit lowercase scientific rendering; round-trips every
/// finite f64 (non-finite values are spelled out, never emitted into JSON).
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    format!("{x:.16e}")
}

/// Pretty JSON formatter that defers structure to [`PrettyFormatter`] and
/// renders every float through [`fmt_f64`].
struct SciFormatter<'a> {
    inner: PrettyFormatter<'a>,
}

impl Formatter for SciFormatter<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(fmt_f64(value).as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_array(w)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array(w)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array_value(w)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object(w)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object(w)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object_value(w)
    }
}

/// Serialize any report value to deterministic pretty JSON (trailing
/// newline included).
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String, ReportError> {
    let mut out = Vec::new();
    let fmt = SciFormatter {
        inner: PrettyFormatter::new(),
    };
    let mut ser = Serializer::with_formatter(&mut out, fmt);
    value.serialize(&mut ser)?;
    out.push(b'\n');
    Ok(String::from_utf8(out).expect("serde_json emits UTF-8"))
}

/// Quote a CSV cell when it contains a separator, quote, or newline.
fn csv_escape(cell: &str) -> String {
    if cell.contains(',') || cell.contains('"') || cell.contains('\n') {
        format!("\"{}\"", cell.replace('"', "\"\""))
    } else {
        cell.to_string()
    }
}

/// Interval table: `lower,upper,n,hole_to_next`, one row per merged
/// interval (descending ε), `n` the first convergent index of the merge,
/// `hole_to_next` the width of the gap down to the next interval (0 when
/// contiguous or last).
pub fn admissible_csv(set: &AdmissibleSet) -> String {
    let mut out = String::from("lower,upper,n,hole_to_next\n");
    for (i, iv) in set.intervals.iter().enumerate() {
        let gap = match set.intervals.get(i + 1) {
            Some(next) => (iv.lower - next.upper).max(0.0),
            None => 0.0,
        };
        out.push_str(&format!(
            "{},{},{},{}\n",
            fmt_f64(iv.lower),
            fmt_f64(iv.upper),
            iv.n_from,
            fmt_f64(gap)
        ));
    }
    out
}

/// Time series table: `t,x,v`.
pub fn series_csv(series: &SimSeries) -> String {
    let mut out = String::from("t,x,v\n");
    for i in 0..series.t.len() {
        out.push_str(&format!(
            "{},{},{}\n",
            fmt_f64(series.t[i]),
            fmt_f64(series.x[i]),
            fmt_f64(series.v[i])
        ));
    }
    out
}

/// Continuity-scan table: `epsilon,zeta,zeta_bound,sup_u,newton_iters,error`
/// with empty cells for absent values.
pub fn scan_csv(rows: &[ScanRow]) -> String {
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    let mut out = String::from("epsilon,zeta,zeta_bound,sup_u,newton_iters,error\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            fmt_f64(r.epsilon),
            opt(r.zeta),
            opt(r.zeta_bound),
            opt(r.sup_u),
            r.newton_iters.map(|n| n.to_string()).unwrap_or_default(),
            csv_escape(r.error.as_deref().unwrap_or(""))
        ));
    }
    out
}

/// One series coefficient next to its independently computed oracle value.
#[derive(Debug, Clone, Copy)]
pub struct CoeffRow {
    pub k: u32,
    pub nu: (i64, i64),
    pub value: Complex64,
    pub oracle: Complex64,
}

impl CoeffRow {
    pub fn abs_diff(&self) -> f64 {
        (self.value - self.oracle).norm()
    }
}

/// Coefficient table: `k,nu1,nu2,re,im,oracle_re,oracle_im,abs_diff`.
pub fn coeff_table_csv(rows: &[CoeffRow]) -> String {
    let mut out = String::from("k,nu1,nu2,re,im,oracle_re,oracle_im,abs_diff\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.k,
            r.nu.0,
            r.nu.1,
            fmt_f64(r.value.re),
            fmt_f64(r.value.im),
            fmt_f64(r.oracle.re),
            fmt_f64(r.oracle.im),
            fmt_f64(r.abs_diff())
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::admissible::{AdmissibleSet, ConstantsUsed, Hole, JunctionMargin, MergedInterval};

    #[test]
    fn float_rendering_is_exact_and_round_trips() {
        assert_eq!(fmt_f64(1.0), "1.0000000000000000e0");
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(-2.5e-7), "-2.4999999999999999e-7");
        assert_eq!(fmt_f64(-0.25), "-2.5000000000000000e-1");
        assert_eq!(fmt_f64(0.0), "0.0000000000000000e0");
        for &x in &[
            1.0,
            -1.0 / 3.0,
            6.0105184860868596e-7,
            f64::MIN_POSITIVE,
            2.2250738585072011e-308, // subnormal neighborhood
            1e300,
            -0.0,
        ] {
            let parsed: f64 = fmt_f64(x).parse().unwrap();
            assert_eq!(parsed.to_bits(), x.to_bits(), "{x:?}");
        }
        assert_eq!(fmt_f64(f64::NAN), "nan");
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
    }

    #[test]
    fn json_emission_is_byte_deterministic() {
        #[derive(Serialize)]
        struct Demo {
            name: &'static str,
            epsilon: f64,
            modes: Vec<f64>,
            ok: bool,
            missing: Option<f64>,
        }
        let demo = Demo {
            name: "golden",
            epsilon: 0.1,
            modes: vec![1.0, -0.5],
            ok: true,
            missing: None,
        };
        let a = to_json_string(&demo).unwrap();
        let b = to_json_string(&demo).unwrap();
        assert_eq!(a, b);
        let expected = "{\n  \"name\": \"golden\",\n  \"epsilon\": 1.0000000000000001e-1,\n  \"modes\": [\n    1.0000000000000000e0,\n    -5.0000000000000000e-1\n  ],\n  \"ok\": true,\n  \"missing\": null\n}\n";
        assert_eq!(a, expected);
        // Round-trip through a strict parser preserves the float bits.
        let v: serde_json::Value = serde_json::from_str(&a).unwrap();
        assert_eq!(v["epsilon"].as_f64().unwrap().to_bits(), (0.1f64).to_bits());
    }

    #[test]
    fn admissible_csv_lists_intervals_and_gaps() {
        let set = AdmissibleSet {
            intervals: vec![
                MergedInterval {
                    lower: 0.25,
                    upper: 1.0,
                    n_from: 1,
                    n_to: 2,
                },
                MergedInterval {
                    lower: 0.0625,
                    upper: 0.125,
                    n_from: 3,
                    n_to: 3,
                },
            ],
            holes: vec![Hole {
                from: 0.125,
                to: 0.25,
                width: 0.125,
                junction_n: 3,
                margin_log: -0.5,
                indeterminate: false,
            }],
            junctions: vec![JunctionMargin {
                junction_n: 3,
                margin_log: -0.5,
                overlaps: false,
                indeterminate: false,
            }],
            n_start: 1,
            n_max: 3,
            contains_zero_closure: false,
            constants: ConstantsUsed::Pair {
                c: 0.1,
                c_prime: 0.2,
                goth_n: 3,
            },
        };
        let csv = admissible_csv(&set);
        let expected = "lower,upper,n,hole_to_next\n\
            2.5000000000000000e-1,1.0000000000000000e0,1,1.2500000000000000e-1\n\
            6.2500000000000000e-2,1.2500000000000000e-1,3,0.0000000000000000e0\n";
        assert_eq!(csv, expected);
    }

    #[test]
    fn series_and_scan_csv_headers_and_escaping() {
        let series = SimSeries {
            t: vec![0.0, 0.5],
            x: vec![1.0, 2.0],
            v: vec![-1.0, 0.25],
            warnings: Vec::new(),
            newton_iters_max: 2,
        };
        let csv = series_csv(&series);
        assert!(csv.starts_with("t,x,v\n"));
        assert_eq!(csv.lines().count(), 3);

        let rows = vec![
            ScanRow {
                epsilon: 1e-3,
                zeta: Some(0.5),
                zeta_bound: Some(0.6),
                sup_u: Some(0.01),
                newton_iters: Some(4),
                error: None,
            },
            ScanRow {
                epsilon: 2e-3,
                zeta: None,
                zeta_bound: None,
                sup_u: None,
                newton_iters: None,
                error: Some("no bracket in [-1, 1]".into()),
            },
        ];
        let csv = scan_csv(&rows);
        assert!(csv.starts_with("epsilon,zeta,zeta_bound,sup_u,newton_iters,error\n"));
        assert!(csv.contains(",4,\n"));
        assert!(csv.contains("\"no bracket in [-1, 1]\""));
    }

    #[test]
    fn coeff_table_reports_the_oracle_difference() {
        let rows = vec![CoeffRow {
            k: 4,
            nu: (1, 0),
            value: Complex64::new(1.0e-11, -4.0e-14),
            oracle: Complex64::new(1.0e-11, -4.0e-14),
        }];
        let csv = coeff_table_csv(&rows);
        assert!(csv.starts_with("k,nu1,nu2,re,im,oracle_re,oracle_im,abs_diff\n"));
        assert!(csv.lines().nth(1).unwrap().starts_with("4,1,0,"));
        assert!(csv.trim_end().ends_with("0.0000000000000000e0"));
    }
}

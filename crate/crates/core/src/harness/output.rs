//! CSV emission. Every float goes through [`format_float`].

use std::io::{Read, Write};

use crate::error::{PassError, Result};
use crate::model::PinchingLayout;

use super::{SolveTrace, SummaryRow, SweepTable};

/// `%.12g`: 12 significant digits, trailing zeros trimmed, exponent form
/// outside `1e-5 ≤ |x| < 1e12`.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.11e}");
    let (mant, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..12).contains(&exp) {
        trim(&format!("{:.*}", (11 - exp) as usize, x))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim(mant), exp.abs())
    }
}

fn trim(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

pub fn write_trace_csv<W: Write>(out: W, scheme: &str, trace: &SolveTrace) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "scheme",
        "outer",
        "inner",
        "phase",
        "surrogate",
        "sum_rate",
        "power",
        "min_energy_margin",
        "layout_hash",
    ])?;
    for r in &trace.rows {
        w.write_record([
            scheme.to_string(),
            r.outer.to_string(),
            r.inner.to_string(),
            r.phase.name().to_string(),
            format_float(r.surrogate),
            format_float(r.sum_rate),
            format_float(r.power),
            format_float(r.min_energy_margin),
            format!("{:016x}", r.layout_hash),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_layout_csv<W: Write>(out: W, layout: &PinchingLayout) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["waveguide", "pa", "position_m"])?;
    for m in 0..layout.num_waveguides() {
        for n in 0..layout.num_pas() {
            w.write_record([m.to_string(), n.to_string(), format_float(layout.get(m, n))])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads the `waveguide,pa,position_m` format written by [`write_layout_csv`].
pub fn read_layout_csv<R: Read>(input: R) -> Result<PinchingLayout> {
    let mut r = csv::Reader::from_reader(input);
    let mut entries: Vec<(usize, usize, f64)> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).ok_or_else(|| PassError::Parse(format!("layout row has {} fields", rec.len())));
        let m = field(0)?.trim().parse().map_err(|e| PassError::Parse(format!("waveguide index: {e}")))?;
        let n = field(1)?.trim().parse().map_err(|e| PassError::Parse(format!("PA index: {e}")))?;
        let l = field(2)?.trim().parse().map_err(|e| PassError::Parse(format!("position: {e}")))?;
        entries.push((m, n, l));
    }
    let rows = entries.iter().map(|e| e.0 + 1).max().unwrap_or(0);
    let cols = entries.iter().map(|e| e.1 + 1).max().unwrap_or(0);
    let mut grid = vec![vec![f64::NAN; cols]; rows];
    for (m, n, l) in entries {
        grid[m][n] = l;
    }
    if grid.iter().flatten().any(|v| v.is_nan()) {
        return Err(PassError::Parse("layout file does not cover every (waveguide, pa) pair".into()));
    }
    PinchingLayout::from_rows(&grid)
}

pub fn write_sweep_csv<W: Write>(out: W, table: &SweepTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "parameter",
        "value",
        "seed",
        "scheme",
        "status",
        "sum_rate",
        "power",
        "min_energy_margin",
        "energy_feasible",
        "converged",
        "outer_iterations",
        "inner_iterations",
    ])?;
    for r in &table.rows {
        w.write_record([
            table.parameter.name().to_string(),
            format_float(r.value),
            r.seed.to_string(),
            r.scheme.name().to_string(),
            r.error.unwrap_or("ok").to_string(),
            format_float(r.sum_rate),
            format_float(r.power),
            format_float(r.min_energy_margin),
            r.energy_feasible.to_string(),
            r.converged.to_string(),
            r.outer_iterations.to_string(),
            r.inner_iterations.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_timings_csv<W: Write>(out: W, table: &SweepTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["parameter", "value", "seed", "scheme", "wall_time_s"])?;
    for r in &table.rows {
        w.write_record([
            table.parameter.name().to_string(),
            format_float(r.value),
            r.seed.to_string(),
            r.scheme.name().to_string(),
            format_float(r.wall_time_s),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(out: W, parameter: &str, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "parameter",
        "value",
        "scheme",
        "runs",
        "ok",
        "energy_feasible",
        "mean_sum_rate",
        "mean_sum_rate_common",
        "common_seeds",
    ])?;
    for r in rows {
        w.write_record([
            parameter.to_string(),
            format_float(r.value),
            r.scheme.name().to_string(),
            r.runs.to_string(),
            r.ok.to_string(),
            r.energy_feasible.to_string(),
            format_float(r.mean_sum_rate),
            format_float(r.mean_sum_rate_common),
            r.common_seeds.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(format_float(0.0), "0");
        assert_eq!(format_float(1.0), "1");
        assert_eq!(format_float(-2.5), "-2.5");
        assert_eq!(format_float(1.0 / 3.0), "0.333333333333");
        assert_eq!(format_float(123456.789012345), "123456.789012");
        assert_eq!(format_float(5e-8), "5e-08");
        assert_eq!(format_float(1.23456789012345e-7), "1.23456789012e-07");
        assert_eq!(format_float(9.9999999999999e11), "1e+12");
        assert_eq!(format_float(f64::INFINITY), "inf");
        assert_eq!(format_float(f64::NAN), "nan");
        for x in [std::f64::consts::PI, 1e-300, -7.77e15, 0.000123456789123] {
            let back: f64 = format_float(x).parse().unwrap();
            assert!((back - x).abs() <= 5e-12 * x.abs());
        }
    }

    #[test]
    fn layout_csv_has_header() {
        let l = PinchingLayout::from_rows(&[vec![1.0, 2.5]]).unwrap();
        let mut buf = Vec::new();
        write_layout_csv(&mut buf, &l).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "waveguide,pa,position_m\n0,0,1\n0,1,2.5\n");
        assert_eq!(read_layout_csv(buf.as_slice()).unwrap(), l);
        assert!(read_layout_csv("waveguide,pa,position_m\n0,1,2.5\n".as_bytes()).is_err());
    }
}

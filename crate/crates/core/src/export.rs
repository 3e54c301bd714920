//! CSV writers. Every table has a header row; units are in the column names.

use std::io::Write;

use crate::attack::{ClickCurvePoint, JitterResult, ThresholdMap};
use crate::detector::{CountRatePoint, DetectorRun};
use crate::error::Result;
use crate::monitor::{AlarmReport, MonitorKind, MonitorTrace};
use crate::qkd::{Bb84Stats, Feasibility};

fn writer<W: Write>(w: W, header: &[&str]) -> Result<csv::Writer<W>> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header)?;
    Ok(out)
}

fn mode_str(m: crate::circuit::Mode) -> &'static str {
    match m {
        crate::circuit::Mode::Geiger => "geiger",
        crate::circuit::Mode::Linear => "linear",
        crate::circuit::Mode::Quenched => "quenched",
    }
}

pub fn write_clicks<W: Write>(w: W, run: &DetectorRun) -> Result<()> {
    let mut out = writer(w, &["t_s", "cause", "amplitude_V"])?;
    for c in &run.clicks {
        out.write_record([c.t.to_string(), c.cause.as_str().to_string(), c.amplitude.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_current_trace<W: Write>(w: W, run: &DetectorRun) -> Result<()> {
    let mut out = writer(w, &["t_start_s", "t_end_s", "current_A", "mode"])?;
    for s in &run.current_trace.segments {
        out.write_record([s.t_start.to_string(), s.t_end.to_string(), s.current.to_string(), mode_str(s.mode).into()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_count_rate<W: Write>(w: W, points: &[CountRatePoint]) -> Result<()> {
    let mut out = writer(w, &["rate_in_Hz", "rate_out_Hz", "mean_current_A", "duration_s"])?;
    for p in points {
        out.write_record([p.rate_in, p.rate_out, p.mean_current, p.duration].map(|x| x.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_click_curve<W: Write>(w: W, p_blinding: f64, points: &[ClickCurvePoint]) -> Result<()> {
    let mut out = writer(w, &["p_blinding_W", "energy_J", "clicks", "trials", "p_hat", "ci_low", "ci_high"])?;
    for p in points {
        out.write_record([
            p_blinding.to_string(),
            p.energy.to_string(),
            p.clicks.to_string(),
            p.trials.to_string(),
            p.p_hat.to_string(),
            p.ci_low.to_string(),
            p.ci_high.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_threshold_map<W: Write>(w: W, map: &ThresholdMap) -> Result<()> {
    let mut out = writer(w, &["p_blinding_W", "e_never_J", "e_always_J"])?;
    for e in &map.entries {
        out.write_record([e.p_blinding, e.e_never, e.e_always].map(|x| x.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_feasibility<W: Write>(w: W, rows: &[Feasibility]) -> Result<()> {
    let mut out = writer(w, &["p_blinding_W", "feasible", "e_low_J", "e_high_J"])?;
    for f in rows {
        let (lo, hi) = f.window.map_or((String::new(), String::new()), |(a, b)| (a.to_string(), b.to_string()));
        out.write_record([f.p_blinding.to_string(), f.feasible.to_string(), lo, hi])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_histogram<W: Write>(w: W, result: &JitterResult) -> Result<()> {
    let mut out = writer(w, &["delay_s", "counts", "fit_counts"])?;
    for (x, &c) in result.histogram.centres().zip(&result.histogram.counts) {
        out.write_record([x.to_string(), c.to_string(), result.fit.eval(x).to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_monitor_trace<W: Write>(w: W, trace: &MonitorTrace) -> Result<()> {
    let unit = match trace.kind {
        MonitorKind::MeanCurrent => "current_A",
        MonitorKind::BiasVoltage => "delta_V",
    };
    let mut out = writer(w, &["t_s", unit])?;
    for (t, v) in &trace.samples {
        out.write_record([t.to_string(), v.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_alarms<W: Write>(w: W, report: &AlarmReport) -> Result<()> {
    let mut out = writer(w, &["t_start_s", "t_end_s", "kind", "peak_deviation"])?;
    for a in &report.alarms {
        out.write_record([
            a.t_start.to_string(),
            a.t_end.to_string(),
            a.kind.as_str().into(),
            a.peak_deviation.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_bb84<W: Write>(w: W, rows: &[(f64, f64, Bb84Stats)]) -> Result<()> {
    let mut out = writer(
        w,
        &[
            "p_blinding_W",
            "e_pulse_J",
            "bob_click_rate",
            "qber_contribution",
            "double_click_rate",
            "basis_match_fraction",
            "rounds",
        ],
    )?;
    for (p, e, s) in rows {
        out.write_record([
            p.to_string(),
            e.to_string(),
            s.bob_click_rate.to_string(),
            s.qber_contribution.to_string(),
            s.double_click_rate.to_string(),
            s.basis_match_fraction.to_string(),
            s.rounds.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::CountRatePoint;

    #[test]
    fn header_and_rows() {
        let mut buf = Vec::new();
        let pts = [CountRatePoint { rate_in: 1e4, rate_out: 990.5, mean_current: 0.0, duration: 1.0 }];
        write_count_rate(&mut buf, &pts).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "rate_in_Hz,rate_out_Hz,mean_current_A,duration_s\n10000,990.5,0,1\n"
        );
    }
}
